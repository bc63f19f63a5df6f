__version__ = '0.1.0'

from .models import *
from .estimator import *
from .opacity import *
from .simulation import *
from .kfunctions import *
from .abstraction import *
from .oracle import *
from .util import *
