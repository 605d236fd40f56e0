"""
Feature layout shared by frames, trajectories, recordings and dictionaries.

A frame holds 21 scalar features in a fixed order: the five fingertip
positions (thumb, index, middle, ring, little; x, y, z each), then the object
position (x, y, z) and the object orientation (roll, pitch, yaw).
"""
import enum

import numpy as np

FINGERS = ("thumb", "index", "middle", "ring", "little")
AXES = ("x", "y", "z")
ANGLES = ("roll", "pitch", "yaw")

N_FINGERS = len(FINGERS)
N_FEATURES = 3 * N_FINGERS + 6

TIME_COLUMN = "t"
FINGERTIP_COLUMNS = [f"{finger}_{axis}" for finger in FINGERS for axis in AXES]
OBJECT_POSITION_COLUMNS = [f"obj_{axis}" for axis in AXES]
OBJECT_ORIENTATION_COLUMNS = [f"obj_{angle}" for angle in ANGLES]
FEATURE_COLUMNS = FINGERTIP_COLUMNS + OBJECT_POSITION_COLUMNS + OBJECT_ORIENTATION_COLUMNS
PALM_COLUMNS = [f"palm_{axis}" for axis in AXES] + [f"palm_{angle}" for angle in ANGLES]

TRAJECTORY_COLUMNS = [TIME_COLUMN] + FEATURE_COLUMNS
RECORDING_COLUMNS = TRAJECTORY_COLUMNS + PALM_COLUMNS

FINGERTIP_SLICE = slice(0, 3 * N_FINGERS)
OBJECT_POSITION_SLICE = slice(3 * N_FINGERS, 3 * N_FINGERS + 3)
OBJECT_ORIENTATION_SLICE = slice(3 * N_FINGERS + 3, N_FEATURES)

# True for features measured in meters, False for radians
POSITION_MASK = np.zeros(N_FEATURES, dtype=bool)
POSITION_MASK[: 3 * N_FINGERS + 3] = True


class Representation(str, enum.Enum):
    PHYSICAL = "physical"
    OFFSET = "offset"


class ObjectShape(str, enum.Enum):
    CUBE = "cube"
    CYLINDER = "cylinder"
