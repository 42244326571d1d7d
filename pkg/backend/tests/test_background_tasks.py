import time

import pytest

from background_tasks import run_ordered
from errors import DomainError


def slow_square(x):
    time.sleep(0.01 * (5 - x % 5))
    return x * x


@pytest.mark.parametrize("workers", [1, 4])
def test_results_keep_submission_order(workers):
    assert run_ordered(slow_square, list(range(12)), workers) == [x * x for x in range(12)]


def test_first_failure_is_raised():
    def fail_on_three(x):
        if x == 3:
            raise DomainError("bad cell", {"cell": x})
        return x

    with pytest.raises(DomainError) as info:
        run_ordered(fail_on_three, list(range(6)), 3)
    assert info.value.details["cell"] == 3


def test_empty_input():
    assert run_ordered(slow_square, [], 4) == []
