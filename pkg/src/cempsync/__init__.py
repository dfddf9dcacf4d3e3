"""Cycle-edge message passing (CEMP) for robust group synchronization.

Groups: Z2, S_N, SO(2), SO(3).  Typical use::

    from cempsync import SO2, make_ucm, build_ucm_schedule, cemp

    inst = make_ucm(200, 1.0, 0.5, SO2(), seed=0)
    rep = build_ucm_schedule(0.5, SO2(), rule="A", r=0.5, T=10)
    state = cemp(inst.graph, "A", rep.schedule, 10, inst.s_star)
"""

from .cemp import (CempState, ExpGrowth, Explicit, InconsistencyTable, RecursionA, RecursionB,
                   TraceRow, cemp, compute_inconsistencies, init_state, run, step, step_weights)
from .graphs import (LambdaStats, MeasurementGraph, TriangleIndex, build_triangle_index,
                     check_connectivity, complete_edges, lambda_from_adjacency, lambda_stats, sample_er)
from .groups import (SO2, SO3, Z2, Group, GroupElement, GroupStats, Perm, compose, distance,
                     group_stats, haar_sample, inverse, make_group)
from .recovery import (Alignment, CleaningResult, DisconnectedError, align_and_score, clean_edges,
                       gap_threshold, solve_tree)
from .synth import (SyntheticInstance, inject_noise, make_adversarial, make_random_adversarial,
                    make_ucm)
from .theory import (FeasibilityReport, ScheduleRequest, Violation, audit, build_schedule,
                     build_ucm_schedule)

__version__ = "0.1.0"
