#include "hiccap/heads_losses.hpp"

namespace hiccap {

const char* to_string(PairSpace p) {
  switch (p) {
    case PairSpace::AudioVideo: return "av";
    case PairSpace::AudioText: return "at";
    case PairSpace::VideoText: return "vt";
  }
  return "?";
}

const char* to_string(MatchTask m) {
  switch (m) {
    case MatchTask::VTM: return "vtm";
    case MatchTask::VAM: return "vam";
    case MatchTask::ATM: return "atm";
  }
  return "?";
}

}  // namespace hiccap
