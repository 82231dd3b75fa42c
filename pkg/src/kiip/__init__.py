"""Kinematically-informed interactive perception: multi-view fusion of a grasped
object into a 30^3 occupancy grid, plus three small voxel classifiers."""

__version__ = "0.1.0"
