"""Reward computation and inference orchestration for template-anchored
stepwise echocardiography reasoning."""

from .errors import (
    DuplicateIdError,
    EchoReasonError,
    EmbedderError,
    EmptyQuestionSet,
    GroupTooSmall,
    GrpoError,
    InvalidTemplate,
    JudgeError,
    LengthMismatch,
    MissingCaption,
    PolicyError,
    ProtocolError,
    RangeError,
    SchemaError,
    ScorerError,
    TemplateError,
    TransportError,
    VerifierError,
    VocabularyError,
)
from .grpo import (
    GrpoResult,
    Rollout,
    RolloutGroup,
    compute_advantages,
    evaluate_objective,
    group_from_dict,
    load_group,
)
from .parsing import Answer, ReasoningStep, Sentence, Transcript, normalize_answer, parse
from .rectify import (
    Decision,
    FlaggedStep,
    RectificationContext,
    StepScore,
    TrrTrace,
    build_rectification_context,
    flag_low_steps,
    rectification_prompt_template,
    run_trr,
    score_steps,
)
from .rewards import (
    DEFAULT_EPSILON,
    RewardBreakdown,
    RewardConfig,
    RewardWeights,
    Stage,
    StageConfig,
    combine,
    compute_accuracy,
    compute_esr,
    compute_format,
    compute_pqlr,
    compute_pqtr,
    score_transcript,
    stage_config,
)
from .sim import (
    CaseResult,
    EvalReport,
    PolicyKind,
    ScriptedPolicy,
    VerifierSet,
    compute_metrics,
    generate_studies,
    run_experiment,
    studies_to_jsonl,
)
from .studies import EchoStudy, Measurement, Video, load_study, study_from_dict, study_to_dict
from .templates import (
    Question,
    ReasoningTemplate,
    RetrievalResult,
    TemplateMeta,
    TemplateStep,
    bundled_template_dir,
    filter_questions,
    load_templates,
    retrieve,
    template_from_dict,
    template_to_dict,
)
from .verifiers import (
    Embedder,
    HashedBowEmbedder,
    Judge,
    MockJudge,
    MockScorer,
    RemoteVerifier,
    SimilarityScorer,
    cosine,
    jaccard,
)
from .vocab import ViewVocabulary, load_vocabulary, parse_vocabulary

__version__ = "0.1.0"
