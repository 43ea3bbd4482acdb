"""Localizer sidecar: wire protocol v1 server with echo and model backends."""

from .adapter import (
    DEFAULT_SCORE_HEAD,
    ECHO_BBOX,
    ECHO_SCORE,
    AdapterConfig,
    AdapterError,
    EchoLocalizer,
    ModelLocalizer,
    build_localizer,
    load_checkpoint,
)
from .protocol import (
    MAX_MESSAGE_BYTES,
    PROTO_VERSION,
    ProtocolError,
    RequestError,
    decode_image,
    encode_frame,
    read_frame,
)
from .server import TcpServer, handle_connection, serve_stdio

__version__ = "0.1.0"
