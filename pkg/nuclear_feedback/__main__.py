"""Allow ``python -m nuclear_feedback``."""

import sys

from .cli import main

sys.exit(main())
