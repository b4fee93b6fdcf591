#pragma once

#include <filesystem>
#include <iosfwd>

#include "dcdp/model.hpp"

namespace dcdp {

/// Text checkpoint, version 1:
///
///   DCDP-CHECKPOINT 1
///   header {"res_blocks":[...],...,"partition":{...}}
///   param <id> <d0,d1,...> <hex-float values...>
///   norm <id> <channels> <running mean...> <running var...>
///   end
///
/// Values are C99 hex floats, so save/load is bit-exact.
void save_checkpoint(const DualPathNetwork& net, std::ostream& os);
void save_checkpoint(const DualPathNetwork& net, const std::filesystem::path& path);
DualPathNetwork load_checkpoint(std::istream& is);
DualPathNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace dcdp
