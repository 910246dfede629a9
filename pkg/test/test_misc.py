import numpy as np
import pytest

from lgdm.misc import cached_property, chunks, frozen, map_ordered


def square(x):
    return x * x


class TestChunks:
    @pytest.mark.parametrize("count, parts", [(10, 3), (10, 1), (3, 8), (1, 1), (100, 7)])
    def test_cover_range_in_order(self, count, parts):
        slices = chunks(count, parts)
        assert len(slices) == min(parts, count)
        assert slices[0].start == 0 and slices[-1].stop == count
        for a, b in zip(slices[:-1], slices[1:]):
            assert a.stop == b.start

    def test_empty(self):
        assert sum(s.stop - s.start for s in chunks(0, 4)) == 0


class TestMapOrdered:
    def test_serial(self):
        assert map_ordered(square, range(5)) == [0, 1, 4, 9, 16]

    def test_pool_keeps_order(self):
        assert map_ordered(square, range(20), processes=2) == [x * x for x in range(20)]


def test_frozen():
    array = frozen(np.arange(3))
    with pytest.raises(ValueError):
        array[0] = 1


def test_cached_property():
    class Counter:
        calls = 0

        @cached_property
        def value(self):
            Counter.calls += 1
            return 42

    c = Counter()
    assert c.value == 42 and c.value == 42
    assert Counter.calls == 1
