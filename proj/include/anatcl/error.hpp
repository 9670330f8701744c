#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anatcl {

enum class ErrorKind {
  // numgrad
  shape_mismatch,
  domain_error,
  non_scalar_loss,
  tape_consumed,
  non_finite,
  // anatomy
  empty_table,
  atlas_mismatch,
  unknown_subject,
  zero_vector,
  dimension_mismatch,
  // losses
  degenerate_anchor,
  length_mismatch,
  // model
  nan_loss,
  missing_degrees,
  io_error,
  version_mismatch,
  corrupt_file,
  // cohort
  invalid_config,
  missing_file,
  id_mismatch,
  malformed_row,
  label_missing,
  width_mismatch,
  // probe
  singular_system,
  single_class,
  // cli / config
  unknown_command,
  unknown_key,
  type_error,
  missing_required,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::domain_error: return "domain-error";
    case ErrorKind::non_scalar_loss: return "non-scalar-loss";
    case ErrorKind::tape_consumed: return "tape-consumed";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::empty_table: return "empty-table";
    case ErrorKind::atlas_mismatch: return "atlas-mismatch";
    case ErrorKind::unknown_subject: return "unknown-subject";
    case ErrorKind::zero_vector: return "zero-vector";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::degenerate_anchor: return "degenerate-anchor";
    case ErrorKind::length_mismatch: return "length-mismatch";
    case ErrorKind::nan_loss: return "nan-loss";
    case ErrorKind::missing_degrees: return "missing-degrees";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::version_mismatch: return "version-mismatch";
    case ErrorKind::corrupt_file: return "corrupt-file";
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::missing_file: return "missing-file";
    case ErrorKind::id_mismatch: return "id-mismatch";
    case ErrorKind::malformed_row: return "malformed-row";
    case ErrorKind::label_missing: return "label-missing";
    case ErrorKind::width_mismatch: return "width-mismatch";
    case ErrorKind::singular_system: return "singular-system";
    case ErrorKind::single_class: return "single-class";
    case ErrorKind::unknown_command: return "unknown-command";
    case ErrorKind::unknown_key: return "unknown-key";
    case ErrorKind::type_error: return "type-error";
    case ErrorKind::missing_required: return "missing-required";
  }
  return "unknown";
}

/// Input problems the user can fix (bad config, malformed or missing data)
/// as opposed to failures during computation or output.
inline bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::missing_file:
    case ErrorKind::id_mismatch:
    case ErrorKind::malformed_row:
    case ErrorKind::label_missing:
    case ErrorKind::width_mismatch:
    case ErrorKind::missing_degrees:
    case ErrorKind::unknown_command:
    case ErrorKind::unknown_key:
    case ErrorKind::type_error:
    case ErrorKind::missing_required:
    case ErrorKind::atlas_mismatch:
    case ErrorKind::unknown_subject:
    case ErrorKind::empty_table:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace anatcl
