from gsdopt.boundaries import BoundaryRule, Family, FutilityMode, FutilityRule, Sidedness
from gsdopt.design import ContinuousEndpoint, DesignSpec, EndpointSpec
from gsdopt.model import InformationRates


def make_spec(family="obf", stages=3, alpha=0.025, beta=0.1, rates=None,
              sidedness=Sidedness.ONE_SIDED, futility=FutilityMode.NONE,
              endpoint=None, **shape):
    rule = BoundaryRule(Family(family), sidedness, **shape)
    fut = FutilityRule.for_efficacy(futility, rule)
    if rates is not None and not isinstance(rates, InformationRates):
        rates = InformationRates(tuple(rates))
    return DesignSpec(stages, alpha, beta, rule, fut,
                      endpoint or EndpointSpec(ContinuousEndpoint(0.5, 1.0)), rates)


