from pathlib import Path

import pytest

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance_results[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid in sorted(_acceptance_results):
        outcome = _acceptance_results[nodeid]
        label = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}")

from oceanarium.agents import PromptAssets, ScriptedChatBackend
from oceanarium.embedding import HashedNgramEmbedder
from oceanarium.ingest import ingest_corpus
from oceanarium.pipeline import ExhibitService
from oceanarium.session import MockTextToSpeech
from oceanarium.transcripts import TranscriptStore
from oceanarium.triggers import TriggerRule, VisualCatalogEntry, VisualKind
from oceanarium.vindex import RetrievalConfig

FIXTURES = Path(__file__).parent / "fixtures"

# the five prepared globe layers used throughout the tests; with the NONE
# sentinel these make the six-token decision grammar
STANDARD_TOKENS = ["CO2", "CHLOROPHYLL", "SST", "CURRENTS", "KD"]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mock_provider() -> HashedNgramEmbedder:
    return HashedNgramEmbedder(dimension=384, seed=7)


@pytest.fixture(scope="session")
def corpus_index(mock_provider):
    return ingest_corpus(
        FIXTURES / "corpus",
        mock_provider,
        embedder_config={"provider": "mock", "dimension": 384, "seed": 7, "ngram": 3},
    )


@pytest.fixture(scope="session")
def standard_catalog() -> list[VisualCatalogEntry]:
    descriptions = {
        "CO2": "Global map of atmospheric carbon dioxide concentration.",
        "CHLOROPHYLL": "Surface chlorophyll showing where phytoplankton bloom.",
        "SST": "Sea surface temperature field and its trends.",
        "CURRENTS": "Major surface currents and circulation.",
        "KD": "Diffuse attenuation layers showing water clarity.",
    }
    return [
        VisualCatalogEntry(
            token=token,
            title=token.title(),
            description=descriptions[token],
            kind=VisualKind.GLOBE_LAYER,
            asset_ref=f"layers/{token.lower()}",
        )
        for token in STANDARD_TOKENS
    ]


@pytest.fixture()
def prompts() -> PromptAssets:
    return PromptAssets.load()


@pytest.fixture()
def standard_rules() -> list[TriggerRule]:
    return [
        TriggerRule("sea-level", ["sea level", "rising seas"], "video_play", {"token": "SEA_LEVEL"}, priority=5),
        TriggerRule("warming", ["warming", "heat", "temperature"], "layer_on", {"token": "SST"}, priority=3),
        TriggerRule("bloom", ["plankton", "chlorophyll", "bloom"], "layer_on", {"token": "CHLOROPHYLL"}, priority=3),
        TriggerRule("carbon", ["carbon", "carbon dioxide"], "layer_on", {"token": "CO2"}, priority=3),
        TriggerRule("currents", ["current", "currents"], "layer_on", {"token": "CURRENTS"}, priority=3),
    ]


def make_service(
    index,
    provider,
    catalog,
    rules,
    prompts_assets,
    tmp_path,
    backend=None,
    tts=None,
    retrieval=None,
    history_cap=6,
) -> ExhibitService:
    return ExhibitService(
        index=index,
        provider=provider,
        catalog=catalog,
        rules=rules,
        backend=backend or ScriptedChatBackend.from_file(
            Path(__file__).parents[1] / "src" / "oceanarium" / "assets" / "mock_script.yaml"
        ),
        prompts=prompts_assets,
        tts=tts or MockTextToSpeech(),
        store=TranscriptStore(tmp_path / "transcripts"),
        retrieval=retrieval or RetrievalConfig(dimension=index.dimension),
        history_cap=history_cap,
    )


@pytest.fixture()
def service(corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path):
    return make_service(
        corpus_index, mock_provider, standard_catalog, standard_rules, prompts, tmp_path
    )
