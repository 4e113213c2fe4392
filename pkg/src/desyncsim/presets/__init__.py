"""Committed machine preset data files (see desyncsim.machines)."""
