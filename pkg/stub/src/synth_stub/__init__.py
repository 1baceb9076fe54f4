from .server import StubConfig, StubServer, main
from .warp import check_rigid, planar_warp

__version__ = "0.1.0"
