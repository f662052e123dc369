"""Export frozen vision-transformer representations into ccalign datasets."""

__version__ = "0.1.0"
