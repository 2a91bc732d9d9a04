// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "ipu/machine.hpp"

namespace ipu {

// One queued packet with its host-side metadata.
struct FifoPacket {
  int device = 0;
  u64 cycle = 0;  // HIT cycle at emission
  std::vector<u8> bytes;
};

// Bounded logical output FIFO. Overflow never stalls the producing core:
// a packet that does not fit is dropped whole and counted, preserving
// byte conservation (emitted = accepted + dropped).
class HostFifo {
 public:
  static constexpr std::size_t kDefaultCapacity = 64 * 1024;

  explicit HostFifo(std::size_t capacity_bytes = kDefaultCapacity)
      : capacity_(capacity_bytes) {}

  void push(int device, Packet&& p);
  std::vector<FifoPacket> drain();  // returns and removes, emission order

  std::size_t capacity() const { return capacity_; }
  std::size_t occupancy() const { return occupancy_; }
  u64 accepted_packets() const { return accepted_packets_; }
  u64 accepted_bytes() const { return accepted_bytes_; }
  u64 dropped_packets() const { return dropped_packets_; }
  u64 dropped_bytes() const { return dropped_bytes_; }

 private:
  std::size_t capacity_;
  std::size_t occupancy_ = 0;
  std::vector<FifoPacket> queue_;
  u64 accepted_packets_ = 0;
  u64 accepted_bytes_ = 0;
  u64 dropped_packets_ = 0;
  u64 dropped_bytes_ = 0;
};

// One registered core plus its output FIFO; the machine's packet sink is
// wired into the FIFO at construction.
class Device {
 public:
  Device(int id, MachineConfig cfg, std::size_t fifo_capacity);
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  int id() const { return id_; }
  Machine& machine() { return machine_; }
  const Machine& machine() const { return machine_; }
  HostFifo& fifo() { return fifo_; }
  const HostFifo& fifo() const { return fifo_; }

 private:
  int id_;
  Machine machine_;
  HostFifo fifo_;
};

// Host-side view of the core collective, keyed by small integer device ids.
//
// Image loading runs a policy gate first: the serialized container checksum
// must verify and the image's policy tag must be in the device's allow-list
// (default: restrictive and permissive; a closed-tagged image is refused
// unless the host explicitly allows it). Gate failures raise Error(Policy).
class DeviceRegistry {
 public:
  int create_device(MachineConfig cfg = {},
                    std::size_t fifo_capacity = HostFifo::kDefaultCapacity);
  Device& at(int id);  // Error(Host) for unknown ids
  const Device& at(int id) const;
  std::size_t size() const { return devices_.size(); }

  void set_allowed_policies(int id, std::set<Policy> allowed);

  // Policy gate + machine.load_image. The byte form re-verifies the
  // container checksum itself so corruption surfaces as a Policy error.
  void ipu_config_image(int id, const std::vector<u8>& image_bytes);
  void ipu_config_image(int id, const ProgramImage& image);

  // Sets (or clears, when unset) the start/stop address triggers.
  void ipu_trigger_calls(int id, std::optional<u64> start_addr,
                         std::optional<u64> stop_addr);

  std::vector<FifoPacket> fifo_drain(int id);

 private:
  std::map<int, std::unique_ptr<Device>> devices_;
  std::map<int, std::set<Policy>> allowed_;
  int next_id_ = 0;
};

// Pure rate arithmetic over a run's emission totals. covered_cycles is the
// HIT cycle span the emissions account for (e.g. flush count * period);
// header_bytes_per_packet is subtracted from each packet so payload-only
// aggregate rates can be reported.
struct BandwidthReport {
  u64 payload_bytes = 0;
  u64 packets = 0;
  u64 covered_cycles = 0;
  double hit_clock_hz = 0.0;
  u32 ipu_count = 1;
  double per_ipu_bytes_per_sec = 0.0;
  double aggregate_bytes_per_sec = 0.0;
};

BandwidthReport bandwidth_report(u64 total_bytes, u64 total_packets,
                                 u64 covered_cycles, double hit_clock_hz,
                                 u32 ipu_count = 1,
                                 u32 header_bytes_per_packet = 0);

// Packet capture files (.ipk): "IPK1" magic, then per packet a u64 cycle,
// u32 length, and the payload bytes, little-endian throughout. Used by the
// CLI to hand run output to the report post-processors.
void save_packets(const std::string& path,
                  const std::vector<FifoPacket>& pkts);
std::vector<FifoPacket> load_packets(const std::string& path);

// Payload-only view, the shape the analytics post-processors take.
std::vector<std::vector<u8>> packet_payloads(
    const std::vector<FifoPacket>& pkts);

}  // namespace ipu
