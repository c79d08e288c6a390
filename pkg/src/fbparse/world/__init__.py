"""Synthetic conversational-search domain: worlds, questions, legacy-parser
errors and user feedback."""
from .corpus import Corpus, CorpusError, CorruptionPolicy, Question, build_corpus, generate_questions
from .edits import (
    CORRECTION_KINDS, DELETION, ENTITY_SUB, INSERTION, PREDICATE_SUB, Correction, CorruptionError,
    apply_corrections, corrupt, diff_lf,
)
from .feedback import AFFIRMATIONS, NO_NOISE, NoiseConfig, generate_feedback
from .grammar import generate_example, render_confirmation, sample_query
from .schema import Clause, Nested, Query, StructureError, count_predicates, parse_query
from .world import DEFAULT_WORLD_SIZES, World, WorldError, generate_world
