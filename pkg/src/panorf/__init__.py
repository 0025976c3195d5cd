"""Progressive local radiance fields for 360 video.

Trains a chain of factorized radiance blocks from an equirectangular video
while jointly estimating camera poses, separating dynamic content with a
self-supervised motion mask, and refining distant blocks bidirectionally.
"""

__version__ = "0.1.0"
