from .base import PAPER_PARSER_CONFIG, Context, ParserConfig, Seq2SeqParser
from .feedback import FeedbackParser, TaskArchitectureProposer
from .task import TaskParser

__all__ = [
    "Context", "FeedbackParser", "PAPER_PARSER_CONFIG", "ParserConfig", "Seq2SeqParser",
    "TaskArchitectureProposer", "TaskParser",
]
