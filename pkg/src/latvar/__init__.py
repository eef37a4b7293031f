"""latvar: latency-variance recording and attribution on a simulated machine.

Pipeline: simulate a machine (`latvar.sim`), record selected tasks'
kernel/hardware event values (`latvar.recorder`), verify the trace
against the simulator's ground-truth ledger, then rank events by their
impact on tail latency (`latvar.analyze`). `latvar.plan` estimates how
long to record to observe rare causes.
"""

__version__ = "0.1.0"
