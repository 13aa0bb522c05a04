"""Trial runner, sweeps, timing and command line."""
