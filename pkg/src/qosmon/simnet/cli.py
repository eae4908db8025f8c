"""Simnet CLI: serve a configured emulated network over loopback sockets.

The in-process transport is what tests use; this serving mode exposes the
same protocol sessions and route shaping over real TCP for manual
exploration (each simulated host:port is mapped to a 127.0.0.1 port).
"""

from __future__ import annotations

import json
import socket
import threading
import time

import click

from .config import build_simnet
from .network import SimNet
from .shaping import RouteShape, transfer_time_ms


class _ShapedConnection(threading.Thread):
    """Serves one accepted socket through a protocol session with pacing."""

    CHUNK = 8192

    def __init__(self, sock: socket.socket, make_session, shape: RouteShape):
        super().__init__(daemon=True)
        self._sock = sock
        self._session = make_session()
        self._shape = shape
        self._t0 = time.monotonic()
        self._bits = 0.0

    def _send_shaped(self, data: bytes) -> None:
        for i in range(0, len(data), self.CHUNK):
            chunk = data[i:i + self.CHUNK]
            self._bits += 8.0 * len(chunk)
            target = self._t0 + transfer_time_ms(self._shape, self._bits) / 1000.0
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self._sock.sendall(chunk)

    def run(self) -> None:
        try:
            greeting = self._session.initial()
            if greeting:
                self._send_shaped(greeting)
            while not self._session.closed:
                data = self._sock.recv(65536)
                if not data:
                    break
                self._bits += 8.0 * len(data)
                out = self._session.feed(data)
                if out:
                    self._send_shaped(out)
        except OSError:
            pass
        finally:
            try:
                self._sock.close()
            except OSError:
                pass


def _serve_service(net: SimNet, svc, listen_port: int) -> socket.socket:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind(("127.0.0.1", listen_port))
    server.listen(16)

    def accept_loop():
        while True:
            try:
                sock, _addr = server.accept()
            except OSError:
                return
            shape = net.route_shape("*", svc.host)
            _ShapedConnection(sock, svc.make_session, shape).start()

    threading.Thread(target=accept_loop, daemon=True).start()
    return server


@click.group()
def main():
    """QoS monitoring network emulation harness."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--base-port", default=18000, show_default=True,
              help="First loopback port; services get consecutive ports.")
def serve(config_path: str, base_port: int):
    """Serve the configured services over 127.0.0.1 until interrupted."""
    net = build_simnet(config_path)
    mappings = []
    port = base_port
    servers = []
    for (host, svc_port), svc in sorted(net._services.items()):
        try:
            servers.append(_serve_service(net, svc, port))
        except OSError as exc:
            raise click.ClickException(
                f"cannot bind 127.0.0.1:{port} for {host}:{svc_port}: {exc}")
        mappings.append({"service": f"{host}:{svc_port}", "kind": svc.kind,
                         "listen": f"127.0.0.1:{port}"})
        port += 1
    click.echo(json.dumps({"listening": mappings}, indent=2))
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        for server in servers:
            server.close()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def validate(config_path: str):
    """Check a simnet config file and summarize it."""
    net = build_simnet(config_path)
    click.echo(json.dumps({
        "seed": net.seed,
        "services": [f"{h}:{p}" for (h, p) in sorted(net._services)],
        "echo_hosts": sorted(net._echo_hosts),
        "routes": [f"{c} -> {h}" for (c, h) in sorted(net._routes)],
    }, indent=2))


if __name__ == "__main__":
    main()
