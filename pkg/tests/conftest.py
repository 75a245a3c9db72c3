import numpy as np
import pytest

from cemnet.trace import Episode, trace_from_string

# Six-row toy trace: two originals (P1 by U1, P3 by U2); P4 reshares P2
# which reshares P1, so both episodes order three users.
T1_CSV = """pid,t,uid,rid
P1,920,U1,-1
P2,930,U2,P1
P3,935,U2,-1
P4,940,U3,P2
P5,945,U3,P3
P6,950,U1,P3
"""


@pytest.fixture
def t1():
    return trace_from_string(T1_CSV)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_episodes(rng, n_users=8, n_episodes=12, max_len=6):
    """Episodes with distinct users and strictly increasing times."""
    episodes = []
    for e in range(n_episodes):
        k = int(rng.integers(2, max_len + 1))
        users = rng.permutation(n_users)[:k]
        times = np.sort(rng.choice(np.arange(1000), size=k, replace=False))
        episodes.append(
            Episode(f"root{e}", tuple(int(u) for u in users),
                    tuple(float(t) for t in times))
        )
    return episodes
