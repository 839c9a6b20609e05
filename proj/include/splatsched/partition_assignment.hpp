#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace splatsched {

struct GpuSlot {
  std::uint32_t machine = 0;
  std::uint32_t gpu = 0;  // local index within the machine

  friend bool operator==(const GpuSlot&, const GpuSlot&) = default;
};

/// Point-group -> (machine, gpu) placement from offline partitioning.
struct PartitionAssignment {
  std::uint32_t machines = 1;
  std::uint32_t gpus_per_machine = 1;
  std::vector<GpuSlot> group_slots;
  /// Machine chosen for each image vertex at the machine level. Empty when
  /// the assignment was imported rather than computed.
  std::vector<std::uint32_t> image_machine;

  std::uint32_t n_gpus() const { return machines * gpus_per_machine; }
  std::uint32_t global_gpu(std::size_t group) const {
    return group_slots[group].machine * gpus_per_machine + group_slots[group].gpu;
  }

  friend bool operator==(const PartitionAssignment&, const PartitionAssignment&) = default;
};

/// CSV "group_id,machine,gpu".
void write_partition_csv(const PartitionAssignment& a, std::ostream& out);
PartitionAssignment read_partition_csv(std::istream& in, std::uint32_t machines,
                                       std::uint32_t gpus_per_machine);

}  // namespace splatsched
