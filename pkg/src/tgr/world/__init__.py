from .corpus import (
    CorpusConfig,
    Episode,
    GroundTruth,
    assign_tags,
    dump_corpus,
    generate_corpus,
    generate_episode,
    load_corpus,
    save_corpus,
    tag_marginals,
)
from .script import (
    ABSENT,
    CONTAINED,
    VISIBLE,
    InteractionEvent,
    SceneEntry,
    SceneSnapshot,
    VisibilityState,
    WorldObject,
    WorldScript,
)
from .world import World, compile_script

__all__ = [
    "ABSENT", "CONTAINED", "VISIBLE", "CorpusConfig", "Episode", "GroundTruth",
    "InteractionEvent", "SceneEntry", "SceneSnapshot", "VisibilityState", "World",
    "WorldObject", "WorldScript", "assign_tags", "compile_script", "dump_corpus",
    "generate_corpus", "generate_episode", "load_corpus", "save_corpus", "tag_marginals",
]
