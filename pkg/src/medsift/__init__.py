"""medsift: cohort construction and medication/side-effect mining from
social-media post dumps."""

__version__ = "0.1.0"

from .corpus import (
    DEFAULT_KEYWORDS,
    KeywordFilterConfig,
    Post,
    PostCollection,
    UserProfile,
    collapse_by_user,
    ingest_posts,
    keyword_filter,
)
from .lexicon import (
    LexiconEntry,
    LexiconVersion,
    diff,
    enrich,
    load_lexicon,
    save_lexicon,
)
from .matcher import (
    LexiconMatcher,
    MatchRecord,
    MatcherConfig,
    detect_negation,
    match_profile,
)
from .text import POST_BOUNDARY, TokenSequence, levenshtein, normalize, normalize_term, similarity
from .classifier import (
    FeatureConfig,
    GridSearchSpec,
    LabeledPost,
    NgramTfidfVectorizer,
    SelfReportClassifier,
    evaluate,
    import_external_labels,
    train,
)
from .annotation import (
    AnnotationRound,
    GoldSet,
    TermLabel,
    cohens_kappa,
    evaluate_matcher,
    pairwise_agreement,
    propose_candidates,
    sample_gold,
)
from .stats import (
    AssociationReport,
    StatsConfig,
    UserSignature,
    association_report,
    benjamini_hochberg,
    build_signatures,
    chi_square_sf,
    dunn_test,
    kruskal_wallis,
    prevalence_table,
)
from .workspace import Workspace

__all__ = [
    "__version__",
    "DEFAULT_KEYWORDS",
    "KeywordFilterConfig",
    "Post",
    "PostCollection",
    "UserProfile",
    "collapse_by_user",
    "ingest_posts",
    "keyword_filter",
    "LexiconEntry",
    "LexiconVersion",
    "diff",
    "enrich",
    "load_lexicon",
    "save_lexicon",
    "LexiconMatcher",
    "MatchRecord",
    "MatcherConfig",
    "detect_negation",
    "match_profile",
    "POST_BOUNDARY",
    "TokenSequence",
    "levenshtein",
    "normalize",
    "normalize_term",
    "similarity",
    "FeatureConfig",
    "GridSearchSpec",
    "LabeledPost",
    "NgramTfidfVectorizer",
    "SelfReportClassifier",
    "evaluate",
    "import_external_labels",
    "train",
    "AnnotationRound",
    "GoldSet",
    "TermLabel",
    "cohens_kappa",
    "evaluate_matcher",
    "pairwise_agreement",
    "propose_candidates",
    "sample_gold",
    "AssociationReport",
    "StatsConfig",
    "UserSignature",
    "association_report",
    "benjamini_hochberg",
    "build_signatures",
    "chi_square_sf",
    "dunn_test",
    "kruskal_wallis",
    "prevalence_table",
    "Workspace",
]
