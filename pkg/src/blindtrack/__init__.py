"""blindtrack: recover and predict pixel-space trajectories for agents the
camera cannot see, from noisy positioning sensors and the tracks of agents
it can see."""

__version__ = "0.1.0"
