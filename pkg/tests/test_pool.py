import threading
import time

import pytest

from cpolab.pool import chunked, parallel_map


@pytest.mark.parametrize("n, parts", [(10, 3), (3, 8), (7, 1), (0, 4)])
def test_chunks_cover_items_in_order(n, parts):
    items = list(range(n))
    chunks = chunked(items, parts)
    assert [x for c in chunks for x in c] == items
    assert len(chunks) <= max(1, min(parts, n))


def test_results_keep_input_order_under_threads():
    def slow_square(x):
        time.sleep(0.002 * (10 - x))
        return x * x

    assert parallel_map(slow_square, list(range(10)), workers=4) == [x * x for x in range(10)]


def test_progress_reports_every_item():
    seen = []
    lock = threading.Lock()

    def record(done, total):
        with lock:
            seen.append((done, total))

    parallel_map(abs, [-1, -2, -3], workers=2, progress=record)
    assert seen == [(1, 3), (2, 3), (3, 3)]
    seen.clear()
    parallel_map(abs, [-1, -2], workers=1, progress=record)
    assert seen == [(1, 2), (2, 2)]
