#pragma once

#include <stdexcept>
#include <string>

namespace torsor {

// Base class for all library errors. CLI maps these to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operands belong to different groups (or an op got a group it cannot handle).
struct GroupKindMismatch : Error {
  using Error::Error;
};

// A payload fails its group's validity invariant (e.g. a non-orthogonal 3x3).
struct InvalidElement : Error {
  using Error::Error;
};

// Graph construction rejected the edge list.
struct InvalidGraph : Error {
  using Error::Error;
};

// Queried a vertex pair that is not an edge.
struct NotAnEdge : Error {
  using Error::Error;
};

// Vertex sequence is not a closed walk along edges.
struct NotACycle : Error {
  using Error::Error;
};

// Two graphs differ in vertex count or edge set where they must agree.
struct TopologyMismatch : Error {
  using Error::Error;
};

// Feature matrix shape does not match the graph or representation.
struct DimensionMismatch : Error {
  using Error::Error;
};

// Operation requires a connected graph.
struct Disconnected : Error {
  using Error::Error;
};

// Operation is undefined on an empty graph or empty input.
struct EmptyInput : Error {
  using Error::Error;
};

// Operation is not defined for the given group or representation.
struct Unsupported : Error {
  using Error::Error;
};

// Exhaustive search would exceed the configured state budget.
struct TooLarge : Error {
  using Error::Error;
};

// Iterative solver hit its iteration cap above tolerance.
struct ConvergenceFailure : Error {
  using Error::Error;
};

// Text input rejected; message carries "line L, col C" context.
struct ParseError : Error {
  using Error::Error;
};

}  // namespace torsor
