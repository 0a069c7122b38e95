// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hava/animation_model.hpp"
#include "hava/audio.hpp"
#include "hava/pose_model.hpp"

namespace hava::config {

/// Flat numeric view of a config; arrays map to multi-element vectors.
using Entries = std::map<std::string, std::vector<double>>;

Entries to_entries(const model::AnimationConfig& cfg);
Entries to_entries(const model::PoseConfig& cfg);
Entries to_entries(const audio::MelConfig& cfg);

/// Keys missing from `entries` keep their value in `base`; unknown keys are
/// ignored so several configs can share one map.
model::AnimationConfig animation_from(const Entries& entries, model::AnimationConfig base = {});
model::PoseConfig pose_from(const Entries& entries, model::PoseConfig base = {});
audio::MelConfig mel_from(const Entries& entries, audio::MelConfig base = {});

/// `key = value` lines; `#` starts a comment. Arrays are comma separated.
std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "<stream>");
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Parses "1,2,3" / "0.5" into numbers; throws naming `key` on bad input.
std::vector<double> parse_numbers(const std::string& key, const std::string& text);

/// Applies `settings` with the given key prefix ("anim.", "pose.", "mel.")
/// and returns the keys that matched nothing.
std::vector<std::string> apply(const std::map<std::string, std::string>& settings, model::AnimationConfig& anim,
                               model::PoseConfig& pose, audio::MelConfig& mel);

}  // namespace hava::config
