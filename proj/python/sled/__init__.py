from ._sled_core import *  # noqa: F401,F403
from ._sled_core import __doc__  # noqa: F401
