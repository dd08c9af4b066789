"""aoi-preempt - skip/switch policies for age of information on a slotted link."""

__version__ = "0.1.0"
