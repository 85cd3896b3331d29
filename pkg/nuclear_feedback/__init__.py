"""Nuclear-spin feedback on a pulsed quantum-dot electron spin.

Optical pumping count rates, the Overhauser-shift Fokker-Planck equation,
its mean-field reduction and scripted figure experiments.
"""

from __future__ import annotations

__version__ = "0.1.0"
