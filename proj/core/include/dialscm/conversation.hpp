#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dialscm {

struct UtteranceMeta {
    int index = 0; // 1-based turn position
    int speaker = 0;
    std::optional<std::string> emotion;
};

// Emotion-cause pair: the utterance at `cause` explains the emotion
// expressed at `turn`; causes never follow their emotion (cause <= turn).
struct EcpPair {
    int turn = 0;
    int cause = 0;
    std::string label; // carried as metadata, unused by the desk pipeline
};

struct Conversation {
    std::vector<UtteranceMeta> utterances;
    std::vector<EcpPair> ecp;

    int size() const { return static_cast<int>(utterances.size()); }
    int speaker_of(int index) const; // 1-based
    bool has_emotion(int index) const;
    void validate() const;
};

// Two speakers taking strict turns, no emotion labels; the reference shape
// used by skeleton fixtures.
Conversation alternating_conversation(int n);

} // namespace dialscm
