"""
Landmark retrieval: 3D-consistent patch features.

Patch encoders are trained to maximise a vectorized smooth average precision
over geometrically defined retrieval sets (positive spheres and don't-care
shells around tentative 3D landmarks), on procedurally generated posed RGB-D
scenes, and evaluated on retrieval, segmentation and relative pose.
"""

__version__ = "0.1.0"
