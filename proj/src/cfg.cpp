#include "bbrv/cfg.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bbrv::cfg {

using assembler::AsmInstr;
using assembler::Item;
using assembler::SourceUnit;
using isa::Op;

namespace {

// register-read set of an instruction, including the architectural reads of ecall
std::vector<uint8_t> regReads(const isa::Instruction& i) {
  auto u = isa::regUse(i);
  return {u.reads, u.reads + u.nReads};
}

// register written, or 0 when none (x0 is not a def)
uint8_t regDef(const isa::Instruction& i) { return isa::regUse(i).def; }

bool isCallInstr(const isa::Instruction& i) { return isa::classify(i).isCall; }

std::string synthLabel(int& counter) { return ".Lb" + std::to_string(counter++); }

}  // namespace

Cfg buildCfg(const SourceUnit& src) {
  Cfg g;
  std::vector<AsmInstr> code;
  std::vector<std::string> pendingLabels;
  std::map<std::string, size_t> labelAt;
  std::map<size_t, std::vector<std::string>> labelsAt;
  size_t itemIdx = 0;
  bool inTrailer = false;
  for (const auto& it : src.items) {
    ++itemIdx;
    if (inTrailer) {
      g.trailer.push_back(it);
      continue;
    }
    switch (it.kind) {
      case Item::Kind::Globl:
        g.prologue.push_back(it);
        g.entry = it.label;
        break;
      case Item::Kind::Label:
        labelAt[it.label] = code.size();
        labelsAt[code.size()].push_back(it.label);
        break;
      case Item::Kind::Instr:
        code.push_back(it.instr);
        break;
      case Item::Kind::Org:
        inTrailer = true;
        g.trailer.push_back(it);
        break;
      default:
        throw CfgError("data directive inside the code section");
    }
  }
  if (code.empty()) throw CfgError("no code");
  if (g.entry.empty() && labelAt.count("_start")) g.entry = "_start";

  std::set<size_t> leaders{0};
  for (size_t i = 0; i < code.size(); ++i) {
    const AsmInstr& a = code[i];
    auto cls = isa::classify(a.ins);
    if (!cls.isControlFlow) continue;
    if (i + 1 < code.size()) leaders.insert(i + 1);
    if (a.ins.op != Op::Jalr) {
      if (a.target.empty()) throw CfgError("control-flow instruction without a label target");
      auto f = labelAt.find(a.target);
      if (f == labelAt.end() || f->second >= code.size())
        throw CfgError("control-flow target '" + a.target + "' not inside the code section");
      leaders.insert(f->second);
    }
  }

  int synth = 0;
  std::vector<size_t> leaderList(leaders.begin(), leaders.end());
  for (size_t li = 0; li < leaderList.size(); ++li) {
    size_t begin = leaderList[li];
    size_t end = li + 1 < leaderList.size() ? leaderList[li + 1] : code.size();
    Block b;
    if (auto f = labelsAt.find(begin); f != labelsAt.end()) b.labels = f->second;
    if (b.labels.empty()) b.labels.push_back(synthLabel(synth));
    b.instrs.assign(code.begin() + static_cast<long>(begin), code.begin() + static_cast<long>(end));
    auto cls = isa::classify(b.instrs.back().ins);
    if (cls.isControlFlow) b.termIdx = static_cast<int>(b.instrs.size()) - 1;
    g.blocks.push_back(std::move(b));
  }
  if (g.entry.empty()) g.entry = g.blocks.front().name();

  // successor edges
  for (size_t bi = 0; bi < g.blocks.size(); ++bi) {
    Block& b = g.blocks[bi];
    std::string next = bi + 1 < g.blocks.size() ? g.blocks[bi + 1].name() : "";
    if (b.termIdx < 0) {
      if (!next.empty()) b.succs.push_back(next);
      continue;
    }
    const AsmInstr& t = b.instrs[static_cast<size_t>(b.termIdx)];
    auto cls = isa::classify(t.ins);
    if (t.ins.op == Op::Jalr) {
      b.computedSucc = true;
      if (cls.isCall && !next.empty()) b.succs.push_back(next);
    } else if (t.ins.op == Op::Jal) {
      b.succs.push_back(t.target);
      if (cls.isCall && !next.empty()) b.succs.push_back(next);  // return continuation
    } else {
      b.succs.push_back(t.target);
      if (!next.empty()) b.succs.push_back(next);  // not-taken edge
    }
  }
  return g;
}

Cfg splitAtCalls(Cfg g) {
  int synth = 1000;  // distinct namespace from buildCfg's labels
  for (size_t bi = 0; bi < g.blocks.size(); ++bi) {
    Block& b = g.blocks[bi];
    size_t start = b.hasBb ? 1 : 0;
    for (size_t i = start; i + 1 < b.instrs.size(); ++i) {
      if (!isCallInstr(b.instrs[i].ins)) continue;
      Block rest;
      rest.labels.push_back(synthLabel(synth));
      rest.instrs.assign(b.instrs.begin() + static_cast<long>(i) + 1, b.instrs.end());
      rest.termIdx = b.termIdx > static_cast<int>(i) ? b.termIdx - static_cast<int>(i) - 1 : -1;
      rest.succs = b.succs;
      rest.computedSucc = b.computedSucc;
      b.instrs.resize(i + 1);
      b.termIdx = static_cast<int>(i);
      b.computedSucc = b.instrs[i].ins.op == Op::Jalr;
      b.succs.clear();
      if (!b.instrs[i].target.empty()) b.succs.push_back(b.instrs[i].target);
      b.succs.push_back(rest.name());  // return continuation
      g.blocks.insert(g.blocks.begin() + static_cast<long>(bi) + 1, std::move(rest));
      break;  // re-examine the new block on the next loop round
    }
  }
  return g;
}

Cfg insertBb(Cfg g) {
  // merge label-only (empty) blocks into their successor
  for (size_t bi = 0; bi + 1 < g.blocks.size();) {
    if (g.blocks[bi].instrs.empty()) {
      auto& nxt = g.blocks[bi + 1];
      nxt.labels.insert(nxt.labels.begin(), g.blocks[bi].labels.begin(), g.blocks[bi].labels.end());
      g.blocks.erase(g.blocks.begin() + static_cast<long>(bi));
    } else {
      ++bi;
    }
  }
  // chain-split oversized blocks
  int synth = 2000;
  for (size_t bi = 0; bi < g.blocks.size(); ++bi) {
    while (g.blocks[bi].instrs.size() > 65535) {
      Block& b = g.blocks[bi];
      Block rest;
      rest.labels.push_back(synthLabel(synth));
      rest.instrs.assign(b.instrs.begin() + 65535, b.instrs.end());
      rest.termIdx = b.termIdx >= 65535 ? b.termIdx - 65535 : -1;
      rest.succs = b.succs;
      rest.computedSucc = b.computedSucc;
      b.instrs.resize(65535);
      b.termIdx = -1;
      b.computedSucc = false;
      b.succs = {rest.name()};
      g.blocks.insert(g.blocks.begin() + static_cast<long>(bi) + 1, std::move(rest));
    }
  }
  for (Block& b : g.blocks) {
    if (b.hasBb) continue;
    AsmInstr bb;
    bb.ins.op = Op::Bb;
    bb.ins.bbSize = static_cast<uint16_t>(b.instrs.size());
    bb.ins.bbSeq = b.termIdx < 0;
    b.instrs.insert(b.instrs.begin(), bb);
    if (b.termIdx >= 0) ++b.termIdx;
    b.hasBb = true;
  }
  return g;
}

namespace {

// Greedy dependence-legal order that avoids putting a load's first consumer
// directly behind the load (the pipeline pays a bubble for that pattern).
std::vector<assembler::AsmInstr> scheduleSeq(std::vector<assembler::AsmInstr> in) {
  auto barrier = [](const isa::Instruction& ins) {
    auto c = isa::classify(ins);
    return c.isBb || c.isLcnt || c.isControlFlow || ins.op == Op::Ecall || ins.op == Op::Ebreak;
  };
  // can in[k] legally run before everything still ahead of it?
  auto canHoist = [&](const std::vector<assembler::AsmInstr>& rem, size_t k) {
    auto u = isa::regUse(rem[k].ins);
    auto ck = isa::classify(rem[k].ins);
    if (barrier(rem[k].ins)) return false;
    for (size_t j = 0; j < k; ++j) {
      if (barrier(rem[j].ins)) return false;
      auto uj = isa::regUse(rem[j].ins);
      auto cj = isa::classify(rem[j].ins);
      if (uj.def) {
        for (int i = 0; i < u.nReads; ++i)
          if (u.reads[i] == uj.def) return false;  // RAW
        if (u.def == uj.def) return false;         // WAW
      }
      if (u.def)
        for (int i = 0; i < uj.nReads; ++i)
          if (uj.reads[i] == u.def) return false;  // WAR
      if ((ck.isLoad && cj.isStore) || (ck.isStore && (cj.isLoad || cj.isStore))) return false;
    }
    return true;
  };
  auto readsReg = [](const assembler::AsmInstr& a, uint8_t r) {
    auto u = isa::regUse(a.ins);
    for (int i = 0; i < u.nReads; ++i)
      if (u.reads[i] == r) return true;
    return false;
  };
  std::vector<assembler::AsmInstr> out;
  uint8_t lastLoadDef = 0;
  while (!in.empty()) {
    size_t pick = 0;
    if (lastLoadDef && readsReg(in[0], lastLoadDef)) {
      for (size_t k = 1; k < in.size(); ++k)
        if (!readsReg(in[k], lastLoadDef) && canHoist(in, k)) {
          pick = k;
          break;
        }
    }
    const assembler::AsmInstr chosen = in[pick];
    in.erase(in.begin() + static_cast<long>(pick));
    lastLoadDef = isa::classify(chosen.ins).isLoad ? isa::regUse(chosen.ins).def : 0;
    out.push_back(chosen);
  }
  return out;
}

}  // namespace

// Under block semantics the whole announced block executes whether or not the
// terminator is taken, so any instruction the terminator does not depend on
// may legally execute after it. Sink everything that is independent of the
// branch condition below the terminator; the more slack, the earlier the fetch
// unit learns the next block address.
Cfg rescheduleTerminators(Cfg g) {
  for (Block& b : g.blocks) {
    size_t start = b.hasBb ? 1 : 0;
    if (b.termIdx < 0) {
      std::vector<AsmInstr> body(b.instrs.begin() + static_cast<long>(start), b.instrs.end());
      body = scheduleSeq(std::move(body));
      std::copy(body.begin(), body.end(), b.instrs.begin() + static_cast<long>(start));
      continue;
    }
    const AsmInstr term = b.instrs[static_cast<size_t>(b.termIdx)];
    if (term.ins.op == Op::Jalr || isCallInstr(term.ins)) continue;  // never moved
    if (term.ins.op == Op::Ecall || term.ins.op == Op::Ebreak) continue;  // traps are immediate
    size_t ti = static_cast<size_t>(b.termIdx);

    std::vector<bool> stay(ti, false);  // over [0, ti); bb slot forced below
    std::vector<bool> forced(ti, false);
    if (b.hasBb) forced[0] = stay[0] = true;

    for (;;) {
      // backward dependence closure from the terminator's source registers
      std::set<uint8_t> needed;
      for (uint8_t r : regReads(term.ins))
        if (r) needed.insert(r);
      for (size_t i = ti; i-- > start;) {
        uint8_t d = regDef(b.instrs[i].ins);
        stay[i] = forced[i] || (d != 0 && needed.count(d));
        if (stay[i]) {
          if (d) needed.erase(d);
          for (uint8_t r : regReads(b.instrs[i].ins))
            if (r) needed.insert(r);
        }
      }
      // legality of each tentative sink against the instructions that remain
      bool changed = false;
      for (size_t i = start; i < ti; ++i) {
        if (stay[i] || forced[i]) continue;
        auto cls = isa::classify(b.instrs[i].ins);
        bool bad = false;
        uint8_t d = regDef(b.instrs[i].ins);
        auto reads = regReads(b.instrs[i].ins);
        for (size_t j = i + 1; j < ti && !bad; ++j) {
          if (!stay[j]) continue;
          auto cj = isa::classify(b.instrs[j].ins);
          if (cls.isStore && (cj.isLoad || cj.isStore)) bad = true;  // memory order
          if (cls.isLoad && cj.isStore) bad = true;
          uint8_t dj = regDef(b.instrs[j].ins);
          if (dj && std::find(reads.begin(), reads.end(), dj) != reads.end())
            bad = true;  // would read the staying instruction's new value
          if (dj && dj == d) bad = true;  // would win the output race
        }
        if (bad) {
          forced[i] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }

    std::vector<AsmInstr> body, sunk;
    for (size_t i = start; i < ti; ++i) (stay[i] ? body : sunk).push_back(b.instrs[i]);
    body = scheduleSeq(std::move(body));
    sunk = scheduleSeq(std::move(sunk));
    std::vector<AsmInstr> rebuilt(b.instrs.begin(), b.instrs.begin() + static_cast<long>(start));
    rebuilt.insert(rebuilt.end(), body.begin(), body.end());
    rebuilt.push_back(term);
    rebuilt.insert(rebuilt.end(), sunk.begin(), sunk.end());
    rebuilt.insert(rebuilt.end(), b.instrs.begin() + static_cast<long>(ti) + 1, b.instrs.end());
    b.termIdx = static_cast<int>(start + body.size());
    b.reschedParam = static_cast<int>(rebuilt.size()) - b.termIdx - 1;
    b.instrs = std::move(rebuilt);
  }
  return g;
}

namespace {

// does any instruction outside (decrement, branch) of the loop read rc?
bool regReadElsewhere(const Cfg& g, uint8_t rc, size_t loopIdx, size_t decPos, size_t preIdx,
                      size_t initPos) {
  for (size_t bi = 0; bi < g.blocks.size(); ++bi) {
    const Block& b = g.blocks[bi];
    for (size_t i = 0; i < b.instrs.size(); ++i) {
      if (bi == loopIdx && (static_cast<int>(i) == b.termIdx || i == decPos)) continue;
      const isa::Instruction& ins = b.instrs[i].ins;
      for (uint8_t r : regReads(ins))
        if (r == rc) return true;
      // the init itself redefines rc; anything before it in the preheader is fine
      (void)preIdx;
      (void)initPos;
    }
  }
  return false;
}

}  // namespace

Cfg placeHardwareLoops(Cfg g) {
  // predecessor map by block index
  std::map<std::string, size_t> byName;
  for (size_t i = 0; i < g.blocks.size(); ++i)
    for (const auto& l : g.blocks[i].labels) byName[l] = i;
  std::map<size_t, std::set<size_t>> preds;
  for (size_t i = 0; i < g.blocks.size(); ++i)
    for (const auto& s : g.blocks[i].succs)
      if (auto f = byName.find(s); f != byName.end()) preds[f->second].insert(i);

  static constexpr int kAllocOrder[4] = {1, 2, 3, 0};
  int nextSet = 0;

  for (size_t li = 0; li < g.blocks.size(); ++li) {
    Block& loop = g.blocks[li];
    if (loop.termIdx < 0 || li == 0) continue;
    const AsmInstr& term = loop.instrs[static_cast<size_t>(loop.termIdx)];
    // self-loop: bne rc, x0, <own label>
    if (term.ins.op != Op::Bne || term.ins.rs2 != 0) continue;
    if (std::find(loop.labels.begin(), loop.labels.end(), term.target) == loop.labels.end())
      continue;
    uint8_t rc = term.ins.rs1;
    if (rc == 0) continue;
    // sole predecessors: itself and the block directly before it in memory
    auto& p = preds[li];
    if (p != std::set<size_t>{li - 1, li}) continue;
    Block& pre = g.blocks[li - 1];
    if (std::find(pre.succs.begin(), pre.succs.end(), loop.name()) == pre.succs.end()) continue;

    // the only write to rc inside the loop must be the decrement
    size_t decPos = loop.instrs.size();
    bool otherWrite = false;
    for (size_t i = loop.hasBb ? 1 : 0; i < loop.instrs.size(); ++i) {
      if (static_cast<int>(i) == loop.termIdx) continue;
      const isa::Instruction& ins = loop.instrs[i].ins;
      if (regDef(ins) == rc) {
        if (ins.op == Op::Addi && ins.rs1 == rc && ins.imm == -1 && decPos == loop.instrs.size())
          decPos = i;
        else
          otherWrite = true;
      }
    }
    if (otherWrite || decPos == loop.instrs.size()) continue;

    // constant trip count: `addi rc, x0, m` in the preheader, not redefined after
    size_t initPos = pre.instrs.size();
    for (size_t i = pre.hasBb ? 1 : 0; i < pre.instrs.size(); ++i) {
      const isa::Instruction& ins = pre.instrs[i].ins;
      if (regDef(ins) == rc)
        initPos = (ins.op == Op::Addi && ins.rs1 == 0 && ins.imm >= 1) ? i : pre.instrs.size();
    }
    if (initPos == pre.instrs.size()) continue;
    if (pre.termIdx >= 0 && initPos > static_cast<size_t>(pre.termIdx)) continue;
    int32_t m = pre.instrs[initPos].ins.imm;

    if (nextSet >= 4) continue;  // NoFreeLoopSet: leave the loop as branches
    int set = kAllocOrder[nextSet++];

    bool rcDead = !regReadElsewhere(g, rc, li, decPos, li - 1, initPos);

    AsmInstr lcnt;
    lcnt.ins.op = Op::Lcnt;
    lcnt.ins.imm = m;
    lcnt.ins.loopSet = static_cast<uint8_t>(set);
    if (rcDead) {
      pre.instrs[initPos] = lcnt;  // replaces the counter init
    } else {
      pre.instrs.insert(pre.instrs.begin() + static_cast<long>(initPos) + 1, lcnt);
      if (pre.termIdx >= static_cast<int>(initPos) + 1) ++pre.termIdx;
      if (pre.hasBb) pre.instrs[0].ins.bbSize = static_cast<uint16_t>(pre.bodySize());
    }

    // rewrite the loop block: drop the branch (and dead decrement), flag the bb
    std::vector<size_t> drop{static_cast<size_t>(loop.termIdx)};
    if (rcDead) drop.push_back(decPos);
    std::sort(drop.rbegin(), drop.rend());
    for (size_t d : drop) loop.instrs.erase(loop.instrs.begin() + static_cast<long>(d));
    loop.termIdx = -1;
    loop.reschedParam = 0;
    if (loop.hasBb) {
      auto& bb = loop.instrs[0].ins;
      bb.bbSize = static_cast<uint16_t>(loop.bodySize());
      bb.sFlags |= uint8_t(1 << set);
      bb.eFlags |= uint8_t(1 << set);
      // seq stays 0: the loop flags dominate block sequencing
    }
    // the loop's only remaining static successor is its memory fall-through
    loop.succs.clear();
    if (li + 1 < g.blocks.size()) loop.succs.push_back(g.blocks[li + 1].name());
  }
  return g;
}

assembler::SourceUnit toSource(const Cfg& g) {
  SourceUnit out;
  out.items = g.prologue;
  for (const Block& b : g.blocks) {
    for (const auto& l : b.labels) {
      Item it;
      it.kind = Item::Kind::Label;
      it.label = l;
      out.items.push_back(it);
    }
    for (const AsmInstr& a : b.instrs) {
      Item it;
      it.kind = Item::Kind::Instr;
      it.instr = a;
      out.items.push_back(it);
    }
  }
  out.items.insert(out.items.end(), g.trailer.begin(), g.trailer.end());
  return out;
}

SizeReport codeSizeReport(const Cfg& before, const Cfg& after) {
  SizeReport r;
  for (const Block& b : before.blocks) r.originalInstrs += b.instrs.size();
  for (const Block& b : after.blocks) {
    r.transformedInstrs += b.instrs.size();
    for (const AsmInstr& a : b.instrs)
      if (a.ins.op == Op::Lcnt) ++r.lcnts;
    r.perBlock.push_back({b.name(), b.bodySize(), b.reschedParam});
  }
  r.blocks = after.blocks.size();
  r.addedInstrs =
      static_cast<int64_t>(r.transformedInstrs) - static_cast<int64_t>(r.originalInstrs);
  r.overhead = r.originalInstrs ? double(r.addedInstrs) / double(r.originalInstrs) : 0.0;
  return r;
}

TransformResult transform(const SourceUnit& src, const TransformOptions& opt) {
  Cfg original = buildCfg(src);
  Cfg g = splitAtCalls(original);
  g = insertBb(std::move(g));
  if (opt.resched) g = rescheduleTerminators(std::move(g));
  if (opt.hwloops) g = placeHardwareLoops(std::move(g));
  TransformResult res;
  res.report = codeSizeReport(original, g);
  res.out = toSource(g);
  res.graph = std::move(g);
  return res;
}

std::string reportJson(const SizeReport& r) {
  nlohmann::json j;
  j["original_instructions"] = r.originalInstrs;
  j["transformed_instructions"] = r.transformedInstrs;
  j["blocks"] = r.blocks;
  j["lcnt_count"] = r.lcnts;
  j["added_instructions"] = r.addedInstrs;
  j["overhead"] = r.overhead;
  j["per_block"] = nlohmann::json::array();
  for (const auto& b : r.perBlock)
    j["per_block"].push_back(
        {{"label", b.label}, {"size", b.size}, {"resched_param", b.reschedParam}});
  return j.dump(2);
}

}  // namespace bbrv::cfg
