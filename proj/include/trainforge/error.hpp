/*
 * Copyright 2026 The Trainforge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trainforge {

// Every failure surfaced by the library carries one of these codes. The
// names are stable: the CLI and the HTTP API print them verbatim.
enum class ErrorCode {
  // task-registry
  kUnknownTask,
  kMalformedTaskId,
  kUnknownParam,
  kTypeMismatch,
  kOutOfBounds,
  // project-config
  kYamlSyntax,
  kUnknownKey,
  kMissingRequiredKey,
  kMissingEnvVar,
  kInvalidValue,
  kMissingColumnRole,
  kHubCredentialsMissing,
  // dataset-processor
  kUnsupportedFormat,
  kSplitNotFound,
  kHubFetchFailed,
  kFileCorrupt,
  kFileMissing,
  kSourceColumnMissing,
  kEmptyMessages,
  kTooFewRecords,
  kCacheCorrupt,
  // trainer-core
  kTrainerUnbound,
  kNonFiniteLoss,
  kShapeMismatch,
  kInvalidStep,
  kShardTooSmall,
  kCheckpointMissing,
  kCheckpointVersionMismatch,
  kFingerprintMismatch,
  kLengthMismatch,
  kEmptyInput,
  // reference-trainers
  kSingleClass,
  kEmptyText,
  kBlockSizeExceedsMaxLength,
  kNoNumericFeatures,
  kUnsupportedMulticlass,
  kTaskHasReferenceTrainer,
  // monitoring
  kSinkClosed,
  // hub-client
  kNotFound,
  kAuthRequired,
  kQuotaExceeded,
  kNetworkError,
  // backend-dispatch
  kBackendUnavailable,
  kSpawnFailed,
  kAlreadyTerminal,
  kNotSupported,
  kIoError,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail, std::string key_path = {});

  ErrorCode code() const { return code_; }
  std::string_view name() const { return error_name(code_); }
  // Dotted config path ("data.column_mapping.text_column") when the error
  // refers to a config location, else empty.
  const std::string& key_path() const { return key_path_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::string key_path_;
};

}  // namespace trainforge
