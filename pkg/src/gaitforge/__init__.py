"""gaitforge: motion tracking MDP, adaptive sampling, trajectory diffusion,
and loss-guided control on two desk-scale physics environments."""

__version__ = "0.1.0"
