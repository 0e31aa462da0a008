"""cot_atlas: walking vs. torso-sliding locomotion energetics workbench."""

__version__ = "0.1.0"
