#pragma once

#include <string_view>

#include "attackcast/graph.hpp"

namespace attackcast {

/// Maps an entity name to its attribute with regular expressions. Rules are
/// tried in the order FR, S, F0, F1, F2, P and the first match wins; names
/// matching none of them are F3. Throws InvalidInput on an empty name.
EntityAttr classify_entity(std::string_view name);

/// Coarse entity class as produced by an upstream entity recognizer.
enum class CoarseClass { File, Process, Socket };

/// Subdivides a recognized entity. Processes and sockets keep their class;
/// files are classified by name and forced into the file family.
EntityAttr subdivide_entity(std::string_view name, CoarseClass coarse);

}  // namespace attackcast
