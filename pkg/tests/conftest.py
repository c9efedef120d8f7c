import pytest

from gsdopt.boundaries import Sidedness
from gsdopt.design import BinaryEndpoint, EndpointSpec
from tests.helpers import make_spec


@pytest.fixture
def hypress_spec():
    return make_spec("obf", 3, alpha=0.05, beta=0.2, sidedness=Sidedness.TWO_SIDED,
                     endpoint=EndpointSpec(BinaryEndpoint(0.40, 0.25)),
                     rates=(1 / 3, 2 / 3, 1.0))


@pytest.fixture
def adrenal_spec():
    return make_spec("haybittle-peto", 3, alpha=0.05, beta=0.1, sidedness=Sidedness.TWO_SIDED,
                     endpoint=EndpointSpec(BinaryEndpoint(0.33, 0.28)),
                     rates=(950 / 3800, 2500 / 3800, 1.0))
