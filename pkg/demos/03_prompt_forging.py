"""
Automatic prompt synthesis
==========================

Detection prompts are built, not hand-written: caption square crops around
coarse detections, tally shape/color words, keep the top M per attribute,
widen with synonyms, and take the cartesian product with the target nouns.
Here the builtin backends stand in for the real captioner and detector.
"""

from nucleidet.backends import (
    OracleGrounder,
    OracleNoiseConfig,
    StaticSynonyms,
    TemplateCaptioner,
)
from nucleidet.backends.base import GroundingQuery
from nucleidet.data import SyntheticSceneConfig, generate_synthetic_scene
from nucleidet.prompt_forge import (
    default_lexicon,
    forge_prompts,
    harvest_captions,
    render_query,
    tally_attributes,
    top_m,
)

image, scene = generate_synthetic_scene(SyntheticSceneConfig(seed=7))

# Step 1: coarse boxes from the plain noun query.
grounder = OracleGrounder(scene, OracleNoiseConfig(seed=7))
coarse = {0: grounder.ground(
    GroundingQuery(image_id=0, query="nuclei", score_threshold=0.1, max_results=50)
)}
print(f"coarse detection: {len(coarse[0])} boxes")

# Step 2: caption the square crops around them.
captions = harvest_captions({0: image}, coarse, TemplateCaptioner())
print(f"captions: {sorted(set(captions))}")

# Step 3: tally attribute words and keep the most frequent.
stats = tally_attributes(captions, default_lexicon())
shapes, colors = top_m(stats, 3)
print(f"top shapes {shapes}, top colors {colors}")

# Compose [shape][color][noun] prompts; attribute synonyms widen coverage,
# noun synonyms stay off by default (rare medical words tend to hurt).
bundle = forge_prompts(
    captions, m=3, nouns=["nuclei"],
    attr_aug=True, noun_aug=False, synonym_provider=StaticSynonyms(),
)
print(f"{len(bundle.triplets)} prompts, first five: {bundle.triplets[:5]}")

for strategy in ("concatenated", "per-triplet"):
    queries = render_query(bundle, strategy, max_triplets_per_query=8)
    print(f"{strategy}: {len(queries)} grounding queries")
print(f"first query: {render_query(bundle, 'concatenated', 8)[0]}")
