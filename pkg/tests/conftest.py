import pytest

from choreo.nbody import SearchTriplet
from choreo.precision import working_digits

# Figure-eight converged to 60 digits at 80/100-digit precision.
FIGURE_EIGHT = (
    "0.347116888118926938242776920320300866247407337170783353439889",
    "0.532724945388030229262027987691926270354911090188219655821614",
    "6.32591398292621167758900033396704706329264990989414709217425",
)

ROW_119 = ("0.41817368353651279", "0.54057212735770067", "521.33539095545824")
ROW_120 = ("0.26562094559259036", "0.5209803403964781", "335.48942966568876")


def figure_eight(digits=64) -> SearchTriplet:
    # parse inside the context so the strings keep their digits
    with working_digits(digits):
        return SearchTriplet.parse(*FIGURE_EIGHT)


@pytest.fixture
def fe64():
    return figure_eight(64)
