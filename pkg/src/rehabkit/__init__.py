"""Desk-scale simulation stack for force-adaptive rehabilitation exercises.

Learn an exercise from tracked demonstrations, replay it through a
force-coupled virtual tunnel at patient-specific scale, supervise the run
against a learned per-phase force corridor, and stream live session state
to a console.
"""

__version__ = "0.1.0"

from .motion import Pose, TimedTrajectory, Wrench

__all__ = ["Pose", "TimedTrajectory", "Wrench", "__version__"]
