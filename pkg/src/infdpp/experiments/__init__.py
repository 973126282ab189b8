"""Experiment plumbing behind the CLI: configs, runners, self-tests and writers."""
