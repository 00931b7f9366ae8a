#pragma once

// Structure-aware self-attention mask over slotted-table positions.
//
// allowed(q, k) is the union of four grants:
//   R1  header token -> header token
//   R2  header token -> any trigger token (one-way unless symmetrized)
//   R3  role-mention tokens of a column <-> the slots of that column
//   R4  trigger tokens of a row <-> the slots of that row
// Everything else is blocked.

#include <cstdint>
#include <string>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/error.hpp"
#include "tabeae/table.hpp"

namespace tabeae {

struct StructureMask {
  int size = 0;
  std::vector<std::uint8_t> allowed;  // row-major, size * size

  bool at(int q, int k) const { return allowed[static_cast<std::size_t>(q) * size + k] != 0; }

  static StructureMask all_true(int n) {
    return {n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 1)};
  }

  ag::AttentionMask as_attention() const { return {size, size, allowed}; }

  bool operator==(const StructureMask&) const = default;
};

struct MaskOptions {
  bool symmetric_header_trigger = false;  // also let triggers attend the header
};

inline StructureMask build_structure_mask(const SlottedTable& t, const MaskOptions& opt = {}) {
  const int n = t.length();
  if (static_cast<int>(t.token_ids.size()) != n) throw Error("structure mask: table layout is incomplete");
  StructureMask m{n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 0)};
  auto grant = [&](int q, int k) { m.allowed[static_cast<std::size_t>(q) * n + k] = 1; };
  auto mutual = [&](const std::vector<int>& group) {
    for (int q : group) {
      for (int k : group) grant(q, k);
    }
  };

  std::vector<int> header;
  std::vector<int> triggers;
  std::vector<std::vector<int>> column_group(t.header.columns.size());
  std::vector<std::vector<int>> row_triggers(t.rows.size());
  std::vector<std::vector<int>> row_slots(t.rows.size());
  for (int p = 0; p < n; ++p) {
    const auto& cell = t.layout[static_cast<std::size_t>(p)];
    switch (cell.kind) {
      case CellKind::kHeaderRole:
        header.push_back(p);
        column_group.at(static_cast<std::size_t>(cell.column)).push_back(p);
        break;
      case CellKind::kHeaderOther:
        if (p >= t.header.length) throw Error("structure mask: position " + std::to_string(p) + " has no cell kind");
        header.push_back(p);
        break;
      case CellKind::kTrigger:
        triggers.push_back(p);
        row_triggers.at(static_cast<std::size_t>(cell.row)).push_back(p);
        break;
      case CellKind::kSlot:
        column_group.at(static_cast<std::size_t>(cell.column)).push_back(p);
        row_slots.at(static_cast<std::size_t>(cell.row)).push_back(p);
        break;
    }
  }

  mutual(header);  // R1
  for (int q : header) {
    for (int k : triggers) {
      grant(q, k);  // R2
      if (opt.symmetric_header_trigger) grant(k, q);
    }
  }
  for (const auto& g : column_group) mutual(g);  // R3
  // R4: a trigger and its slots; slots of one row meet only through R3.
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    mutual(row_triggers[r]);
    for (int q : row_triggers[r]) {
      for (int k : row_slots[r]) {
        grant(q, k);
        grant(k, q);
      }
    }
  }
  return m;
}

// Debug dump: 4-byte little-endian size n, then n*n bits row-major, bit
// (q * n + k) stored LSB-first in byte (q * n + k) / 8.
inline std::vector<std::uint8_t> pack_mask(const StructureMask& m) {
  const std::size_t bits = static_cast<std::size_t>(m.size) * m.size;
  std::vector<std::uint8_t> out(4 + (bits + 7) / 8, 0);
  const auto n = static_cast<std::uint32_t>(m.size);
  for (int b = 0; b < 4; ++b) out[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>((n >> (8 * b)) & 0xFF);
  for (std::size_t i = 0; i < bits; ++i) {
    if (m.allowed[i]) out[4 + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

inline StructureMask unpack_mask(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw DataError("packed mask shorter than its header");
  std::uint32_t n = 0;
  for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(b)]) << (8 * b);
  const std::size_t bits = static_cast<std::size_t>(n) * n;
  if (bytes.size() != 4 + (bits + 7) / 8) throw DataError("packed mask has the wrong byte length");
  StructureMask m{static_cast<int>(n), std::vector<std::uint8_t>(bits, 0)};
  for (std::size_t i = 0; i < bits; ++i) m.allowed[i] = (bytes[4 + i / 8] >> (i % 8)) & 1u;
  return m;
}

}  // namespace tabeae
