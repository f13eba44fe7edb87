import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")
GOLDEN = os.path.join(ROOT, "tests", "golden")


@pytest.fixture(scope="session")
def demos():
    from nsplan.demos import generate_demos
    return generate_demos(50, blocks=4, seed=7, noise_std=0.01)


@pytest.fixture(scope="session")
def learned(demos):
    from nsplan.abstraction import hanoi_vocabulary, learn_domain
    return learn_domain([d.transitions for d in demos], hanoi_vocabulary())


@pytest.fixture(scope="session")
def skills(demos):
    from nsplan.skills import train_skills
    return train_skills([d.steps for d in demos])


@pytest.fixture(scope="session")
def nsm_agent(learned, skills):
    from nsplan.skills import Agent
    return Agent(learned[0], skills, name="nsm")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
