#pragma once

// Typed views of a resolved Config for each module.

#include "kpdisc/behavior.hpp"
#include "kpdisc/config.hpp"
#include "kpdisc/data.hpp"
#include "kpdisc/discover.hpp"
#include "kpdisc/model.hpp"
#include "kpdisc/trainer.hpp"

namespace kpdisc {

TargetParams target_params(const Config& c);
ModelConfig model_config(const Config& c);
PerceptualConfig perceptual_config(const Config& c);
TrainConfig train_config(const Config& c);
LoadOptions load_options(const Config& c);
DiscoverOptions discover_options(const Config& c);
FeatureFlags feature_flags(const Config& c);
ClassifierConfig classifier_config(const Config& c);

}  // namespace kpdisc
