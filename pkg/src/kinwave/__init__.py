"""Multi-commodity kinematic-wave traffic simulation."""
