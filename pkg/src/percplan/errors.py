"""Exception types raised by the planning pipeline."""


class PlanningError(Exception):
    """Base class for planner failures."""


class InfeasibleSpace(PlanningError):
    """Free-space sampling could not find collision-free candidates."""


class NoGoalSample(PlanningError):
    """No roadmap node lies in the goal region and its center is in collision."""


class NoFeasiblePlan(PlanningError):
    """The search exhausted its open set without a goal plan within the bound."""


class NonConvergence(PlanningError):
    """The Riccati solution failed its residual tolerance."""


class ScenarioError(Exception):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(ScenarioError):
    """A scenario value violates a documented invariant."""
