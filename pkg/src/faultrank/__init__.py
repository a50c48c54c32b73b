"""Method-level fault localization toolkit.

Builds revision graphs from repository history, computes multi-revision
bug-fixing features, and ranks candidate faulty methods against bug
reports with a recurrent/attention model.
"""

__version__ = "0.1.0"
