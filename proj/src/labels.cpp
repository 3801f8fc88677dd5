#include "emoattr/labels.hpp"

#include "emoattr/error.hpp"

namespace emoattr {

std::string to_string(EmotionLabel label) {
  switch (label) {
    case EmotionLabel::Anger: return "Anger";
    case EmotionLabel::Disgust: return "Disgust";
    case EmotionLabel::Fear: return "Fear";
    case EmotionLabel::Happiness: return "Happiness";
    case EmotionLabel::Sadness: return "Sadness";
    case EmotionLabel::Surprise: return "Surprise";
  }
  throw ArgumentError("invalid emotion label value");
}

EmotionLabel emotion_from_string(const std::string& name) {
  for (EmotionLabel label : kAllEmotions) {
    if (to_string(label) == name) return label;
  }
  throw ArgumentError("unknown emotion '" + name +
                      "' (expected one of Anger, Disgust, Fear, Happiness, "
                      "Sadness, Surprise)");
}

}  // namespace emoattr
