import pytest

from vowsn_asr.scenarios import make_audio_setup

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def audio_setup():
    """Ten-word tone corpus: 100 training and 50 test utterances at 8 kHz,
    with models trained on the training half."""
    return make_audio_setup(n_words=10, n_train=100, n_test=50, noise_sigma=0.02, seed=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
