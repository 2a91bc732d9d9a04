// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/hostapi.hpp"

#include <cstring>
#include <fstream>
#include <utility>

namespace ipu {

void HostFifo::push(int device, Packet&& p) {
  if (occupancy_ + p.bytes.size() > capacity_) {
    dropped_packets_++;
    dropped_bytes_ += p.bytes.size();
    return;  // newest packet dropped whole; the producer never stalls
  }
  occupancy_ += p.bytes.size();
  accepted_packets_++;
  accepted_bytes_ += p.bytes.size();
  FifoPacket fp;
  fp.device = device;
  fp.cycle = p.cycle;
  fp.bytes = std::move(p.bytes);
  queue_.push_back(std::move(fp));
}

std::vector<FifoPacket> HostFifo::drain() {
  std::vector<FifoPacket> out;
  out.swap(queue_);
  occupancy_ = 0;
  return out;
}

Device::Device(int id, MachineConfig cfg, std::size_t fifo_capacity)
    : id_(id), machine_(cfg), fifo_(fifo_capacity) {
  machine_.set_packet_sink(
      [this](Packet&& p) { fifo_.push(id_, std::move(p)); });
}

int DeviceRegistry::create_device(MachineConfig cfg,
                                  std::size_t fifo_capacity) {
  int id = next_id_++;
  devices_[id] = std::make_unique<Device>(id, cfg, fifo_capacity);
  allowed_[id] = {kPolicyRestrictive, kPolicyPermissive};
  return id;
}

Device& DeviceRegistry::at(int id) {
  auto it = devices_.find(id);
  if (it == devices_.end())
    throw Error(ErrorKind::Host, "unknown device id " + std::to_string(id));
  return *it->second;
}

const Device& DeviceRegistry::at(int id) const {
  auto it = devices_.find(id);
  if (it == devices_.end())
    throw Error(ErrorKind::Host, "unknown device id " + std::to_string(id));
  return *it->second;
}

void DeviceRegistry::set_allowed_policies(int id, std::set<Policy> allowed) {
  at(id);  // existence check
  allowed_[id] = std::move(allowed);
}

void DeviceRegistry::ipu_config_image(int id, const std::vector<u8>& bytes) {
  Device& dev = at(id);
  // Gate step 1: the container checksum must verify. The trailer is the
  // last 4 bytes, CRC-32 over everything before it.
  if (bytes.size() < 20)
    throw Error(ErrorKind::Policy, "image container too small");
  u32 stored = u32(bytes[bytes.size() - 4]) |
               u32(bytes[bytes.size() - 3]) << 8 |
               u32(bytes[bytes.size() - 2]) << 16 |
               u32(bytes[bytes.size() - 1]) << 24;
  u32 computed = crc32_bytes(bytes.data(), bytes.size() - 4);
  if (stored != computed)
    throw Error(ErrorKind::Policy, "image checksum mismatch: stored " +
                                       to_hex(stored) + ", computed " +
                                       to_hex(computed));
  ProgramImage image = ProgramImage::parse(bytes);
  const std::set<Policy>& allow = allowed_[id];
  if (allow.find(image.policy) == allow.end())
    throw Error(ErrorKind::Policy,
                std::string("policy tag '") + policy_name(image.policy) +
                    "' not allowed on this device");
  dev.machine().load_image(image);
}

void DeviceRegistry::ipu_config_image(int id, const ProgramImage& image) {
  Device& dev = at(id);
  const std::set<Policy>& allow = allowed_[id];
  if (allow.find(image.policy) == allow.end())
    throw Error(ErrorKind::Policy,
                std::string("policy tag '") + policy_name(image.policy) +
                    "' not allowed on this device");
  dev.machine().load_image(image);
}

void DeviceRegistry::ipu_trigger_calls(int id, std::optional<u64> start_addr,
                                       std::optional<u64> stop_addr) {
  Device& dev = at(id);
  dev.machine().host_control(HostCommand::kConfigStart, start_addr);
  dev.machine().host_control(HostCommand::kConfigStop, stop_addr);
}

std::vector<FifoPacket> DeviceRegistry::fifo_drain(int id) {
  return at(id).fifo().drain();
}

BandwidthReport bandwidth_report(u64 total_bytes, u64 total_packets,
                                 u64 covered_cycles, double hit_clock_hz,
                                 u32 ipu_count, u32 header_bytes_per_packet) {
  BandwidthReport r;
  u64 hdr = u64(header_bytes_per_packet) * total_packets;
  r.payload_bytes = total_bytes > hdr ? total_bytes - hdr : 0;
  r.packets = total_packets;
  r.covered_cycles = covered_cycles;
  r.hit_clock_hz = hit_clock_hz;
  r.ipu_count = ipu_count;
  if (covered_cycles > 0 && hit_clock_hz > 0) {
    r.per_ipu_bytes_per_sec =
        double(r.payload_bytes) * hit_clock_hz / double(covered_cycles);
    r.aggregate_bytes_per_sec = r.per_ipu_bytes_per_sec * double(ipu_count);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Packet capture files
// ---------------------------------------------------------------------------

namespace {
constexpr char kPacketMagic[4] = {'I', 'P', 'K', '1'};

void put_u32(std::ostream& os, u32 v) {
  u8 b[4] = {u8(v), u8(v >> 8), u8(v >> 16), u8(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, u64 v) {
  put_u32(os, u32(v));
  put_u32(os, u32(v >> 32));
}
}  // namespace

void save_packets(const std::string& path,
                  const std::vector<FifoPacket>& pkts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Usage, "cannot write packet file " + path);
  os.write(kPacketMagic, 4);
  for (const auto& p : pkts) {
    put_u64(os, p.cycle);
    put_u32(os, u32(p.bytes.size()));
    os.write(reinterpret_cast<const char*>(p.bytes.data()),
             std::streamsize(p.bytes.size()));
  }
}

std::vector<FifoPacket> load_packets(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Usage, "cannot open packet file " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kPacketMagic, 4) != 0)
    throw Error(ErrorKind::Malformed, path + ": bad packet file magic");
  std::vector<FifoPacket> out;
  for (;;) {
    u8 hdr[12];
    if (!is.read(reinterpret_cast<char*>(hdr), 12)) {
      if (is.gcount() == 0) break;
      throw Error(ErrorKind::Malformed, path + ": truncated packet header");
    }
    u64 cycle = 0;
    for (int i = 7; i >= 0; i--) cycle = cycle << 8 | hdr[i];
    u32 len = u32(hdr[8]) | u32(hdr[9]) << 8 | u32(hdr[10]) << 16 |
              u32(hdr[11]) << 24;
    if (len > (1u << 24))
      throw Error(ErrorKind::Malformed, path + ": packet length implausible");
    FifoPacket p;
    p.cycle = cycle;
    p.bytes.resize(len);
    if (len && !is.read(reinterpret_cast<char*>(p.bytes.data()), len))
      throw Error(ErrorKind::Malformed, path + ": truncated packet payload");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<u8>> packet_payloads(
    const std::vector<FifoPacket>& pkts) {
  std::vector<std::vector<u8>> out;
  out.reserve(pkts.size());
  for (const auto& p : pkts) out.push_back(p.bytes);
  return out;
}

}  // namespace ipu
