#pragma once

#include <string>

#include "attackcast/graph.hpp"

namespace attackcast {

/// An attack template graph tagged with its ATT&CK technique.
struct AtgTemplate {
    std::string technique_id;
    std::string tactic;
    std::string description;
    AttackGraph graph{GraphRole::ATG};
};

}  // namespace attackcast
