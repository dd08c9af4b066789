"""aoi-preempt tests package."""
