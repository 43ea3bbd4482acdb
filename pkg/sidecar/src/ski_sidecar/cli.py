"""Command-line entry point: pick a backend and a transport, then serve."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .adapter import MODES, AdapterConfig, AdapterError, build_localizer
from .server import TcpServer, serve_stdio


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise AdapterError(f"--listen must be HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise AdapterError(f"bad port in --listen {value!r}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ski-sidecar",
        description="Localizer sidecar speaking the length-prefixed JSON wire protocol.",
    )
    parser.add_argument("--mode", choices=MODES, default="echo")
    parser.add_argument("--weights", help="checkpoint path (model mode)")
    parser.add_argument("--listen", help="HOST:PORT to serve on")
    parser.add_argument("--stdio", action="store_true", help="serve one connection over stdio")
    args = parser.parse_args(argv)

    try:
        config = AdapterConfig(
            mode=args.mode, weights=args.weights, listen=args.listen, stdio=args.stdio
        )
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        localizer = build_localizer(config)
        if config.stdio:
            return serve_stdio(localizer)
        host, port = _parse_listen(config.listen)
        server = TcpServer(host, port, localizer)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot listen on {config.listen}: {exc}", file=sys.stderr)
        return 1

    print(f"listening on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main())
