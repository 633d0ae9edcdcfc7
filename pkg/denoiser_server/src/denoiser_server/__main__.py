"""CLI entry: `python -m denoiser_server --source clean.xyz [...]`."""

import argparse
import sys

from .plugins import PluginError, build_plugin
from .server import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="denoiser-server")
    parser.add_argument("--plugin", choices=("empirical", "zero"), default="empirical")
    parser.add_argument("--source", nargs="*", default=[],
                        help="XYZ source clouds (empirical plugin)")
    parser.add_argument("--t-total", type=int, default=500,
                        help="schedule length advertised in hello")
    parser.add_argument("--tcp", metavar="HOST:PORT",
                        help="serve over TCP instead of stdio")
    args = parser.parse_args(argv)

    try:
        plugin = build_plugin(args.plugin, args.source, args.t_total)
    except (PluginError, FileNotFoundError) as e:
        print(f"plugin error: {e}", file=sys.stderr)
        return 2

    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        return serve_tcp(host or "127.0.0.1", int(port), plugin, args.t_total)
    return serve_stdio(plugin, args.t_total)


if __name__ == "__main__":
    sys.exit(main())
