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

#include "trainforge/error.hpp"

namespace trainforge {
namespace {

std::string Format(ErrorCode code, const std::string& detail,
                   const std::string& key_path) {
  std::string out(error_name(code));
  if (!key_path.empty()) out += " at " + key_path;
  if (!detail.empty()) out += ": " + detail;
  return out;
}

}  // namespace

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kMalformedTaskId: return "MalformedTaskId";
    case ErrorCode::kUnknownParam: return "UnknownParam";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kYamlSyntax: return "YamlSyntax";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kMissingRequiredKey: return "MissingRequiredKey";
    case ErrorCode::kMissingEnvVar: return "MissingEnvVar";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kMissingColumnRole: return "MissingColumnRole";
    case ErrorCode::kHubCredentialsMissing: return "HubCredentialsMissing";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kSplitNotFound: return "SplitNotFound";
    case ErrorCode::kHubFetchFailed: return "HubFetchFailed";
    case ErrorCode::kFileCorrupt: return "FileCorrupt";
    case ErrorCode::kFileMissing: return "FileMissing";
    case ErrorCode::kSourceColumnMissing: return "SourceColumnMissing";
    case ErrorCode::kEmptyMessages: return "EmptyMessages";
    case ErrorCode::kTooFewRecords: return "TooFewRecords";
    case ErrorCode::kCacheCorrupt: return "CacheCorrupt";
    case ErrorCode::kTrainerUnbound: return "TrainerUnbound";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidStep: return "InvalidStep";
    case ErrorCode::kShardTooSmall: return "ShardTooSmall";
    case ErrorCode::kCheckpointMissing: return "CheckpointMissing";
    case ErrorCode::kCheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorCode::kFingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kBlockSizeExceedsMaxLength: return "BlockSizeExceedsMaxLength";
    case ErrorCode::kNoNumericFeatures: return "NoNumericFeatures";
    case ErrorCode::kUnsupportedMulticlass: return "UnsupportedMulticlass";
    case ErrorCode::kTaskHasReferenceTrainer: return "TaskHasReferenceTrainer";
    case ErrorCode::kSinkClosed: return "SinkClosed";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kAuthRequired: return "AuthRequired";
    case ErrorCode::kQuotaExceeded: return "QuotaExceeded";
    case ErrorCode::kNetworkError: return "NetworkError";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kSpawnFailed: return "SpawnFailed";
    case ErrorCode::kAlreadyTerminal: return "AlreadyTerminal";
    case ErrorCode::kNotSupported: return "NotSupported";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail, std::string key_path)
    : std::runtime_error(Format(code, detail, key_path)),
      code_(code),
      detail_(std::move(detail)),
      key_path_(std::move(key_path)) {}

}  // namespace trainforge
