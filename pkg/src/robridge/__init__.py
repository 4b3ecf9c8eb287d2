"""robridge: a desk-scale hierarchical manipulation testbed.

Three tiers: an instruction planner that decomposes tasks into primitive
actions, a geometry-only mask/depth observation bridge, and a small
learned policy trained by behavior cloning with adaptive-sampling DAgger.
Everything is deterministic under explicit seeds.
"""

__version__ = "0.1.0"

from .hcp import Plan, PrimitiveAction, Status  # noqa: F401
from .observation import Observation, ObsTensor, TrackerState  # noqa: F401
from .tasks import RandomizationSuite, TaskSpec, instantiate, load_catalog  # noqa: F401
from .render import render  # noqa: F401
from .world import WorldState, create_world, step  # noqa: F401
