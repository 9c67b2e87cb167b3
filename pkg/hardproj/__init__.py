"""
Top level module. Import all names from other modules.
"""

from .exceptions import *
from .linalg import *
from .net import *
from .constraints import *
from .projection import *
from .thermo_data import *
from .reactor import *
from .dataset import *
from .model import *
from .metrics import *
from .config import *
from .training import *
from .version import __version__
