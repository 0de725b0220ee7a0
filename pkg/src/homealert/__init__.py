"""homealert: household-emergency search simulation and inference toolkit."""

from .acoustics import (
    AudioEvent,
    AudioObservation,
    Labeler,
    grounding_of,
    identity_labeler,
    is_emergency_trigger,
    make_event,
    observe_audio,
)
from .agent import (
    Action,
    PolicyConfig,
    Trace,
    build_episode_graph,
    df_policy,
    ours_policy,
    step,
)
from .episodes import (
    ActivitySchedule,
    EpisodeParams,
    EpisodeSpec,
    Heatmap,
    generate_batch,
    generate_episode,
    make_heatmap,
    sample_human_room,
)
from .evaluation import (
    Metrics,
    ag_success,
    aggregate,
    render_trace,
    run_ablation,
    run_batch,
    spl,
)
from .identify import DetectorVerdict, SimulatedDetector, detect, make_detector
from .inference import (
    EmergencyBelief,
    RoomPosterior,
    clear_room,
    direction_likelihood,
    init_prior,
    label_likelihood,
    posterior_update,
    reobserve,
    select_target,
)
from .scenegraph import (
    PDSG,
    AgentNode,
    PlaceNode,
    RoomNode,
    SceneObject,
    StaticObjectNode,
    agent_room_distribution,
    build_pdsg,
    trait_room_likelihood,
    update_agent_belief,
)
from .world import (
    Floorplan,
    GenerationParams,
    OccupancyGrid,
    Portal,
    Pose,
    RoomMap,
    floorplan_from_ascii,
    generate_floorplan,
    line_of_sight,
    room_of,
    shortest_path,
)

__version__ = "0.1.0"
