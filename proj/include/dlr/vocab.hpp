#pragma once

#include <string>
#include <vector>

#include "dlr/errors.hpp"

namespace dlr {

// ============================================================================
// Token vocabulary and prompt layout
// ============================================================================
//
// Prompts use a fixed-field token layout so both backbones (and humans) can
// decode instances; see docs/formats.md. The leading L tokens carry one
// per-layer flag each, which keeps every flag inside the pooled prefix for
// any window count. Multichoice options are written as letter/value pairs,
// so answering is an induction pattern: find the value that matches the
// target and emit the letter right before it.
//
//   numeric:      [FLAG_{f_1} .. FLAG_{f_L}, TAG, VAL_offset, SEP]
//   multichoice:  [FLAG_{f_1} .. FLAG_{f_L}, TAG, VAL_offset,
//                  LETTER_A, VAL_o0, .. LETTER_D, VAL_o3, SEP]

namespace vocab {

inline constexpr int kMaxFlagValue = 9;        // flags carry small ints 0..9
inline constexpr int kFlagBase = 0;            // FLAG_0 .. FLAG_9 -> 0..9
inline constexpr int kTagA1 = 10;
inline constexpr int kTagA2 = 11;
inline constexpr int kTagD1 = 12;              // TAG_D1..TAG_D5 -> 12..16
inline constexpr int kSep = 17;
inline constexpr int kAns = 18;
inline constexpr int kLetterA = 19;            // LETTER_A..D -> 19..22
inline constexpr int kPad = 23;
inline constexpr int kValueBase = 24;          // VAL_0 .. VAL_{M-1}

// Vocabulary size for a given value modulus M.
inline constexpr int size_for_modulus(int modulus) { return kValueBase + modulus; }

inline int flag_token(int value) {
  if (value < 0 || value > kMaxFlagValue) throw InputError("flag value out of range");
  return kFlagBase + value;
}

inline int value_token(int value, int modulus) {
  if (value < 0 || value >= modulus) throw InputError("value out of range for modulus");
  return kValueBase + value;
}

inline bool is_value_token(int token, int modulus) {
  return token >= kValueBase && token < kValueBase + modulus;
}

inline int value_of(int token) { return token - kValueBase; }

inline bool is_flag_token(int token) {
  return token >= kFlagBase && token <= kFlagBase + kMaxFlagValue;
}

inline int letter_token(int index) { return kLetterA + index; }

inline std::string letter_name(int index) {
  static const char* names[] = {"A", "B", "C", "D"};
  return names[index];
}

}  // namespace vocab

// Decoded view of a prompt; both backbones parse prompts through this.
struct PromptFields {
  std::vector<int> flags;      // one small int per layer
  int tag = 0;                 // raw tag token
  int offset = 0;              // starting counter value
  bool multichoice = false;
  std::vector<int> options;    // 4 option values when multichoice
};

inline PromptFields parse_prompt(const std::vector<int>& tokens, int num_layers, int modulus) {
  if (tokens.empty()) throw InputError("empty token sequence");
  const int L = num_layers;
  if (static_cast<int>(tokens.size()) < L + 3) {
    throw InputError("prompt too short for fixed-field layout");
  }
  PromptFields f;
  f.flags.resize(L);
  for (int i = 0; i < L; ++i) {
    if (!vocab::is_flag_token(tokens[i])) throw InputError("expected flag token");
    f.flags[i] = tokens[i] - vocab::kFlagBase;
  }
  f.tag = tokens[L];
  f.multichoice = (f.tag == vocab::kTagA1 || f.tag == vocab::kTagA2);
  if (!vocab::is_value_token(tokens[L + 1], modulus)) {
    throw InputError("expected offset value token");
  }
  f.offset = vocab::value_of(tokens[L + 1]);
  if (f.multichoice) {
    if (static_cast<int>(tokens.size()) < L + 11) throw InputError("multichoice prompt too short");
    for (int i = 0; i < 4; ++i) {
      if (tokens[L + 2 + 2 * i] != vocab::letter_token(i)) {
        throw InputError("expected option letter token");
      }
      const int tok = tokens[L + 3 + 2 * i];
      if (!vocab::is_value_token(tok, modulus)) throw InputError("expected option value token");
      f.options.push_back(vocab::value_of(tok));
    }
  }
  return f;
}

inline std::vector<int> build_prompt(const PromptFields& f, int modulus) {
  std::vector<int> tokens;
  for (int flag : f.flags) tokens.push_back(vocab::flag_token(flag));
  tokens.push_back(f.tag);
  tokens.push_back(vocab::value_token(f.offset, modulus));
  if (f.multichoice) {
    for (std::size_t i = 0; i < f.options.size(); ++i) {
      tokens.push_back(vocab::letter_token(static_cast<int>(i)));
      tokens.push_back(vocab::value_token(f.options[i], modulus));
    }
  }
  tokens.push_back(vocab::kSep);
  return tokens;
}

}  // namespace dlr
