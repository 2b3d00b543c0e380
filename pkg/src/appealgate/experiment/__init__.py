"""Assignment, the event log, and the hypothesis report."""

from appealgate.experiment.assignment import Assignment, AssignmentStore, Group, draw_group, hash_unit
from appealgate.experiment.eventlog import CorruptLogError, EventLog, EventRecord

__all__ = [
    "Assignment",
    "AssignmentStore",
    "CorruptLogError",
    "EventLog",
    "EventRecord",
    "Group",
    "draw_group",
    "hash_unit",
]
