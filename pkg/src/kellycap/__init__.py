"""Log-optimal portfolios, fading-channel capacity and the value of side information."""

from ._validation import InvalidInputError
from .channel import *  # noqa: F401,F403
from .channel import __all__ as _channel_all
from .estimators import LogOptimalPortfolio, PowerAllocator, SideInfoQuantizer, SideInfoTest
from .growth import *  # noqa: F401,F403
from .growth import __all__ as _growth_all
from .market import *  # noqa: F401,F403
from .market import __all__ as _market_all
from .orders import *  # noqa: F401,F403
from .orders import __all__ as _orders_all
from .si_test import *  # noqa: F401,F403
from .si_test import __all__ as _si_test_all
from .side_info import *  # noqa: F401,F403
from .side_info import __all__ as _side_info_all

__version__ = "0.1.0"

__all__ = [
    "InvalidInputError",
    "LogOptimalPortfolio",
    "PowerAllocator",
    "SideInfoQuantizer",
    "SideInfoTest",
    *_market_all,
    *_growth_all,
    *_channel_all,
    *_orders_all,
    *_side_info_all,
    *_si_test_all,
]
