#pragma once

#include <array>
#include <string>

namespace emoattr {

// The six analyzed emotions. Contempt is deliberately absent.
enum class EmotionLabel {
  Anger,
  Disgust,
  Fear,
  Happiness,
  Sadness,
  Surprise,
};

inline constexpr std::array<EmotionLabel, 6> kAllEmotions = {
    EmotionLabel::Anger,    EmotionLabel::Disgust, EmotionLabel::Fear,
    EmotionLabel::Happiness, EmotionLabel::Sadness, EmotionLabel::Surprise,
};

std::string to_string(EmotionLabel label);

// Parses one of the six names (case-sensitive); anything else, including
// "Contempt", is rejected with an argument error.
EmotionLabel emotion_from_string(const std::string& name);

}  // namespace emoattr
