#include "dialscm/conversation.hpp"

#include "dialscm/error.hpp"

#include <string>

namespace dialscm {

int Conversation::speaker_of(int index) const {
    if (index < 1 || index > size()) {
        throw ValidationError("utterance index " + std::to_string(index) +
                              " out of range 1.." + std::to_string(size()));
    }
    return utterances[static_cast<std::size_t>(index - 1)].speaker;
}

bool Conversation::has_emotion(int index) const {
    if (index < 1 || index > size()) {
        throw ValidationError("utterance index " + std::to_string(index) +
                              " out of range 1.." + std::to_string(size()));
    }
    return utterances[static_cast<std::size_t>(index - 1)].emotion.has_value();
}

void Conversation::validate() const {
    for (int i = 0; i < size(); ++i) {
        if (utterances[static_cast<std::size_t>(i)].index != i + 1) {
            throw StructuralError("utterance at position " + std::to_string(i) +
                                  " has index " +
                                  std::to_string(utterances[static_cast<std::size_t>(i)].index) +
                                  ", expected " + std::to_string(i + 1));
        }
    }
    for (const EcpPair& p : ecp) {
        if (p.cause < 1 || p.turn < p.cause || p.turn > size()) {
            throw StructuralError("emotion-cause pair (" + std::to_string(p.turn) + ", " +
                                  std::to_string(p.cause) +
                                  ") violates 1 <= cause <= turn <= " + std::to_string(size()));
        }
    }
}

Conversation alternating_conversation(int n) {
    if (n < 0) throw ValidationError("conversation length must be non-negative");
    Conversation conv;
    conv.utterances.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        UtteranceMeta u;
        u.index = i;
        u.speaker = (i % 2 == 1) ? 0 : 1;
        conv.utterances.push_back(std::move(u));
    }
    return conv;
}

} // namespace dialscm
