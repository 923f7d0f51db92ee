"""Wiring diagrams with Moore, LTI and contract algebras, time contracts and
attacker-side analysis."""

from .wiring import *  # noqa: F401,F403
from .behavior import *  # noqa: F401,F403
from .contracts import *  # noqa: F401,F403
from .temporal import *  # noqa: F401,F403
from .security import *  # noqa: F401,F403

__version__ = "0.1.0"
