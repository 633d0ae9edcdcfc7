"""Reference implementation of the point-cloud denoiser wire protocol."""

from .plugins import EmpiricalPlugin, PluginError, ZeroPlugin, build_plugin
from .server import handle_line, serve_stdio, serve_tcp

__version__ = "0.1.0"
