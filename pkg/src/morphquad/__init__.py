"""Kinematics and flight simulation for a tendon-driven continuum-morphing quadrotor."""

__version__ = "0.1.0"
