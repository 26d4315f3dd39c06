import io

import numpy as np
import pytest

from windlstm import data as D

HEADER = "timestamp,ws10,wdir,temp,rh,press,dewpt,ws2,srad\n"


def csv_bytes(rows, header=HEADER):
    return (header + "".join(r + "\n" for r in rows)).encode("utf-8")


@pytest.fixture
def three_rows():
    return csv_bytes([
        "2016-02-01 00:00,5.1,180,3.2,60,901.2,-2.0,3.0,0",
        "2016-02-01 00:05,5.3,182,,61,901.1,-2.1,3.1,0",
        "2016-02-01 00:10,5.0,185,3.0,62,901.0,-2.2,2.9,0",
    ])


@pytest.fixture(scope="session")
def synth_small():
    return D.synth_generate(600, seed=4)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
