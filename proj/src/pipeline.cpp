#include "bbrv/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cctype>
#include <deque>
#include <memory>

#include <json.hpp>

namespace bbrv::pipeline {

using isa::Op;
using refmodel::StopKind;
using trace::Resource;

namespace {

constexpr uint64_t kUnknown = ~0ull;

std::atomic<uint64_t> gRunCounter{0};

bool isPow2(uint32_t v) { return v && (v & (v - 1)) == 0; }

// Direct-mapped cache. Tags hold the full line address, so any 32-bit
// address (including wrong-path garbage) can be probed safely.
struct DirectCache {
  CacheConfig cfg;
  uint32_t nLines = 0, shift = 0;
  std::vector<uint32_t> tag;
  std::vector<bool> valid;

  explicit DirectCache(const CacheConfig& c) : cfg(c) {
    if (!isPow2(c.lineBytes) || !isPow2(c.sizeBytes) || c.lineBytes > c.sizeBytes)
      throw ConfigError("cache geometry must be power-of-two sized");
    nLines = c.sizeBytes / c.lineBytes;
    shift = static_cast<uint32_t>(__builtin_ctz(c.lineBytes));
    tag.assign(nLines, 0);
    valid.assign(nLines, false);
  }

  // true on hit; installs the line on a miss
  bool access(uint32_t addr, uint32_t& lineAddr) {
    lineAddr = addr & ~(cfg.lineBytes - 1);
    if (!cfg.enabled) return true;
    uint32_t idx = (addr >> shift) & (nLines - 1);
    if (valid[idx] && tag[idx] == lineAddr) return true;
    valid[idx] = true;
    tag[idx] = lineAddr;
    return false;
  }

  bool probe(uint32_t addr) const {
    if (!cfg.enabled) return false;
    uint32_t lineAddr = addr & ~(cfg.lineBytes - 1);
    uint32_t idx = (addr >> shift) & (nLines - 1);
    return valid[idx] && tag[idx] == lineAddr;
  }
};

enum class StallTag : uint8_t { Decode, Branch, Bb };

// One entry of the non-speculative fetch schedule: an address plus the piece
// of in-flight information that must land before the fetch may issue.
struct StreamItem {
  uint32_t addr = 0;
  bool side = false;  // next-block announcement fetched ahead of the body
  enum class Dep : uint8_t {
    None,
    BbIssued,     // body position 1: the block's bb must have been fetched
    BbInfo,       // needs the announcement data (size / flags / target)
    ColdBbInfo,   // like BbInfo, but discovered by decoding (cold start)
    CfResolve,    // needs a control-flow instruction's redirect value
    LcntResolve,  // needs a loop counter written by lcnt
    GateDecode,   // serialized fetch: previous instruction decoded
    GateResolve,  // serialized fetch: previous instruction fully resolved
  };
  Dep dep = Dep::None;
  int depIdx = -1;
  Dep dep2 = Dep::None;
  int dep2Idx = -1;
  StallTag tag = StallTag::Decode;

  // dynamic timing, filled in as the run proceeds
  bool issued = false;
  uint64_t issueCycle = kUnknown;
  uint64_t infoCycle = kUnknown;     // bb only: announcement usable by the fetch unit
  uint64_t enterExCycle = kUnknown;  // decode complete
  uint64_t enterMemCycle = kUnknown;
  uint64_t resolveCycle = kUnknown;  // architectural step happened
  uint64_t enterWbCycle = kUnknown;
};

// Generates the architectural fetch order together with issue dependencies by
// walking a private copy of the reference model. For the block-aware fetch
// unit the next block's announcement is interposed at the point its address
// becomes known; the serialized fetcher gets a plain decode/resolve gate.
struct StreamGen {
  refmodel::ArchState ws;
  bool prefetch;
  std::vector<StreamItem> items;
  int pendingIdx = -1;
  bool done = false;
  uint64_t walkFuel;

  int lastMainIdx = -1;
  bool lastSerializes = false;  // previous instruction can redirect the pc
  int curBbIdx = -1;
  int posInBlock = 0;
  bool curBbCold = false;
  std::array<int, 4> lcntItem{{-1, -1, -1, -1}};
  std::array<bool, 4> lcntFresh{};

  StreamGen(const assembler::ProgramImage& img, refmodel::Mode mode, bool doPrefetch,
            uint64_t fuel)
      : prefetch(doPrefetch), walkFuel(fuel) {
    refmodel::loadInto(ws, img);
    ws.mode = mode;
  }

  bool wordIsBb(uint32_t addr) const {
    if ((addr & 3u) || !ws.mem.inRange(addr, 4)) return false;
    auto d = isa::decode(ws.mem.read32(addr));
    return isa::decodeOk(d) && std::get<isa::Instruction>(d).op == Op::Bb;
  }

  void ensure(size_t count) {
    while (!done && items.size() < count) stepOnce();
  }

  void stepOnce() {
    if (done) return;
    if (walkFuel-- == 0) {
      done = true;
      return;
    }
    uint32_t pc = ws.pc;
    uint32_t icBefore = ws.ic;
    int curIdx;
    bool viaPending = pendingIdx >= 0 && items[static_cast<size_t>(pendingIdx)].addr == pc;
    if (viaPending) {
      curIdx = pendingIdx;
      pendingIdx = -1;
    } else {
      StreamItem it;
      it.addr = pc;
      if (!prefetch) {
        // serialized fetcher: everything waits on the previous instruction
        if (lastMainIdx >= 0) {
          bool gateResolve = (ws.mode == refmodel::Mode::BbRequired) || lastSerializes;
          it.dep = gateResolve ? StreamItem::Dep::GateResolve : StreamItem::Dep::GateDecode;
          it.depIdx = lastMainIdx;
          it.tag = (gateResolve && lastSerializes) ? StallTag::Branch : StallTag::Decode;
        }
      } else if (icBefore > 0) {
        // body of the announced block
        if (posInBlock == 1 && !curBbCold) {
          it.dep = StreamItem::Dep::BbIssued;
          it.tag = StallTag::Bb;
        } else if (posInBlock == 1) {
          it.dep = StreamItem::Dep::ColdBbInfo;
          it.tag = StallTag::Decode;
        } else {
          it.dep = StreamItem::Dep::BbInfo;
          it.tag = StallTag::Bb;
        }
        it.depIdx = curBbIdx;
      } else if (lastMainIdx >= 0) {
        // block leader the prefetcher did not interpose, or unannounced code:
        // fall back to serialized fetch behind the previous instruction
        bool gateResolve = (ws.mode == refmodel::Mode::BbRequired) || lastSerializes;
        it.dep = gateResolve ? StreamItem::Dep::GateResolve : StreamItem::Dep::GateDecode;
        it.depIdx = lastMainIdx;
        it.tag = (gateResolve && lastSerializes) ? StallTag::Branch : StallTag::Decode;
      }
      items.push_back(it);
      curIdx = static_cast<int>(items.size()) - 1;
    }

    auto r = refmodel::step(ws);
    if (r.stop != StopKind::None) {
      done = true;
      return;
    }
    auto cls = isa::classify(r.ins);
    if (cls.isBb) {
      curBbIdx = curIdx;
      posInBlock = 1;
      // interposed announcements are recognized as such; anything else the
      // fetch unit only understands once decoded
      curBbCold = !viaPending;
    } else if (icBefore > 0) {
      ++posInBlock;
    }
    if (cls.isLcnt) {
      lcntItem[r.ins.loopSet] = curIdx;
      lcntFresh[r.ins.loopSet] = true;
    }
    lastMainIdx = curIdx;
    lastSerializes = cls.isControlFlow || cls.isBb || r.ins.op == Op::Ecall ||
                     r.ins.op == Op::Ebreak;

    if (prefetch && pendingIdx < 0) {
      bool known = (cls.isBb && ws.b == 0) || (cls.isControlFlow && r.wroteT);
      if (known && wordIsBb(ws.t)) {
        StreamItem s;
        s.addr = ws.t;
        s.side = true;
        if (cls.isBb) {
          s.dep = StreamItem::Dep::BbInfo;
          s.depIdx = curIdx;
          s.tag = StallTag::Bb;
          uint8_t touched = r.ins.sFlags | r.ins.eFlags;
          for (int k = 0; k < 4; ++k) {
            if ((touched >> k) & 1 && lcntFresh[static_cast<size_t>(k)]) {
              s.dep2 = StreamItem::Dep::LcntResolve;
              s.dep2Idx = lcntItem[static_cast<size_t>(k)];
              lcntFresh[static_cast<size_t>(k)] = false;
            }
          }
        } else {
          s.dep = StreamItem::Dep::CfResolve;
          s.depIdx = curIdx;
          s.tag = StallTag::Branch;
        }
        items.push_back(s);
        pendingIdx = static_cast<int>(items.size()) - 1;
      }
    }
  }
};

struct Slot {
  bool valid = false;
  uint64_t fid = 0;
  uint32_t pc = 0;
  uint32_t word = 0;
  isa::Instruction ins;
  bool decoded = false;
  bool illegal = false;
  int streamIdx = -1;
  bool side = false;
  bool predTaken = false;
  uint32_t predTarget = 0;
  bool predCounted = false;
  bool dmiss = false;
  bool dAccessDone = false;
  bool stepped = false;
  refmodel::StepResult res;
};

enum { IF = 0, ID = 1, EX = 2, MEM = 3, WB = 4 };

struct Sim {
  const assembler::ProgramImage& img;
  const PipelineConfig& cfg;
  uint64_t maxCycles;

  SimResult out;
  refmodel::ArchState rm;
  DirectCache icache, dcache;
  std::vector<uint8_t> bht;
  std::vector<uint8_t> btbValid;
  std::vector<uint32_t> btbTag, btbTarget;

  bool streamMode;
  bool speculative;
  std::unique_ptr<StreamGen> gen;
  size_t scanMain = 0, scanSide = 0;

  std::array<Slot, 5> st{};
  uint32_t fetchPc;
  uint64_t nextFid = 0;
  uint32_t ifBusy = 0, memBusy = 0;
  std::deque<Slot> deferredBb;  // fetched announcements awaiting their architectural turn

  uint64_t cycle = 0;
  uint64_t logIdx = 0;
  uint64_t issueCycles = 0;
  bool ended = false;
  bool suppressFetch = false;
  bool ifStalled = false;
  bool pendingFlush = false;
  uint32_t flushTarget = 0;

  Sim(const assembler::ProgramImage& image, const PipelineConfig& c, uint64_t fuel)
      : img(image), cfg(c), maxCycles(fuel), icache(c.icache), dcache(c.dcache),
        fetchPc(image.entry) {
    if (c.dualPortBb && c.strategy != Strategy::BasicBlocker)
      throw ConfigError("dual-port bb fetch requires the block-aware fetch strategy");
    if (!isPow2(c.bhtEntries) || !isPow2(c.btbEntries))
      throw ConfigError("predictor tables must be power-of-two sized");
    out.runId = ++gRunCounter;
    out.events.runId = out.runId;
    refmodel::loadInto(rm, img);
    rm.mode = c.mode;
    bht.assign(c.bhtEntries, 1);  // weakly not-taken
    btbValid.assign(c.btbEntries, 0);
    btbTag.assign(c.btbEntries, 0);
    btbTarget.assign(c.btbEntries, 0);
    streamMode = c.strategy == Strategy::Simplest || c.strategy == Strategy::BasicBlocker;
    speculative = !streamMode && c.strategy != Strategy::Baseline;
    if (streamMode)
      gen = std::make_unique<StreamGen>(img, c.mode,
                                        c.strategy == Strategy::BasicBlocker, maxCycles + 64);
  }

  void emit(Resource r, uint32_t addr, uint64_t fid, uint32_t pc) {
    out.events.events.push_back({cycle, r, addr, fid, pc});
  }

  uint32_t fetchWord(uint32_t addr) const {
    if ((addr & 3u) || !rm.mem.inRange(addr, 4)) return 0;
    return rm.mem.read32(addr);
  }

  void ensureDecoded(Slot& s) {
    if (s.decoded) return;
    s.decoded = true;
    auto d = isa::decode(s.word);
    if (isa::decodeOk(d))
      s.ins = std::get<isa::Instruction>(d);
    else
      s.illegal = true;
  }

  uint32_t bhtIdx(uint32_t pc) const { return (pc >> 2) & (cfg.bhtEntries - 1); }
  uint32_t btbIdx(uint32_t pc) const { return (pc >> 2) & (cfg.btbEntries - 1); }

  StreamItem& item(const Slot& s) { return gen->items[static_cast<size_t>(s.streamIdx)]; }

  // ---- architectural step (resolve-stage entry) -------------------------

  void archStep(Slot& s) {
    uint32_t pcBefore = rm.pc;
    auto r = refmodel::step(rm);
    s.res = r;
    s.stepped = true;
    out.log.push_back({logIdx++, pcBefore, r.ins});
    // a faulting instruction does not retire; it is recorded as the exception cause
    if (r.stop == StopKind::None || r.stop == StopKind::Halted) out.retiredFids.insert(s.fid);
    out.stats.retired++;
    if (r.outByte) out.output.push_back(static_cast<char>(*r.outByte));
    if (streamMode && s.streamIdx >= 0) item(s).resolveCycle = cycle;

    emit(Resource::PcWrite, r.nextPc, s.fid, pcBefore);
    auto use = isa::regUse(r.ins);
    if (use.def != 0) emit(Resource::RegFile, use.def, s.fid, pcBefore);
    if (cfg.mode == refmodel::Mode::BbRequired) emit(Resource::BbState, 0, s.fid, pcBefore);

    auto cls = isa::classify(r.ins);
    if (cls.isLcnt) emit(Resource::LoopSet, r.ins.loopSet, s.fid, pcBefore);
    if (cls.isBb) {
      uint8_t touched = r.ins.sFlags | r.ins.eFlags;
      for (int k = 0; k < 4; ++k)
        if ((touched >> k) & 1) emit(Resource::LoopSet, static_cast<uint32_t>(k), s.fid, pcBefore);
      out.stats.blockExec[pcBefore]++;
      out.stats.blockSizeHist[r.ins.bbSize]++;
    }

    if (cls.isConditionalBranch) {
      if (cfg.strategy == Strategy::DynamicBP || cfg.strategy == Strategy::DynamicTargetBP) {
        uint32_t bi = bhtIdx(pcBefore);
        uint8_t& c = bht[bi];
        c = r.branchTaken ? static_cast<uint8_t>(std::min(3, c + 1))
                          : static_cast<uint8_t>(std::max(0, c - 1));
        emit(Resource::BhtEntry, bi, s.fid, pcBefore);
      }
      if (cfg.strategy == Strategy::DynamicTargetBP && r.branchTaken) {
        uint32_t ti = btbIdx(pcBefore);
        btbValid[ti] = 1;
        btbTag[ti] = pcBefore;
        btbTarget[ti] = pcBefore + static_cast<uint32_t>(r.ins.imm);
        emit(Resource::BtbEntry, ti, s.fid, pcBefore);
      }
      if (s.predCounted && s.predTaken != r.branchTaken) out.stats.mispredictions++;
    }

    if (r.stop != StopKind::None) {
      ended = true;
      out.stop = r.stop;
      out.exitCode = r.exitCode;
      if (r.stop != StopKind::Halted) out.exceptionFid = s.fid;
      return;
    }
    drainDeferred();
  }

  void drainDeferred() {
    while (!deferredBb.empty() && deferredBb.front().pc == rm.pc && !ended) {
      Slot s = deferredBb.front();
      deferredBb.pop_front();
      archStep(s);
    }
  }

  Slot* oldestYounger() {
    // resolve=MEM: successor sits in ID (EX was just vacated); resolve=EX: in IF
    if (cfg.branchResolveStage == ResolveStage::MEM) {
      if (st[ID].valid) return &st[ID];
      if (st[IF].valid) return &st[IF];
    } else {
      if (st[IF].valid) return &st[IF];
    }
    return nullptr;
  }

  void killSlot(Slot& s) {
    out.flushKilledFids.insert(s.fid);
    out.stats.flushes++;
    s.valid = false;
  }

  void doResolve(Slot& s) {
    ensureDecoded(s);
    if (streamMode && s.side && s.pc != rm.pc) {
      deferredBb.push_back(s);
      return;
    }
    if (s.pc != rm.pc) throw std::logic_error("pipeline desynchronized from the reference model");
    archStep(s);
    if (ended || streamMode) return;

    uint32_t actual = s.res.nextPc;
    Slot* younger = oldestYounger();
    if (younger) {
      // the kill lands at the end of the cycle: younger slots still perform
      // this cycle's stage entry (transient effects are the whole point)
      if (younger->pc != actual) {
        pendingFlush = true;
        flushTarget = actual;
      }
    } else if (fetchPc != actual) {
      fetchPc = actual;
    }
  }

  void applyFlush() {
    pendingFlush = false;
    bool any = false;
    if (cfg.branchResolveStage == ResolveStage::MEM && st[EX].valid) {
      killSlot(st[EX]);
      any = true;
    }
    if (st[ID].valid) {
      killSlot(st[ID]);
      any = true;
    }
    if (st[IF].valid) {
      killSlot(st[IF]);
      ifBusy = 0;
      any = true;
    }
    if (any) out.stats.flushEvents++;
    fetchPc = flushTarget;
    suppressFetch = true;
  }

  // ---- stage entry actions ---------------------------------------------

  void onEnterWb(Slot& s) {
    if (streamMode && s.streamIdx >= 0) item(s).enterWbCycle = cycle;
  }

  void onEnterEx(Slot& s) {
    ensureDecoded(s);
    if (streamMode && s.streamIdx >= 0) {
      item(s).enterExCycle = cycle;
      if (!s.illegal && s.ins.op == Op::Bb && cfg.bbForwardStage == BbForward::EX &&
          item(s).infoCycle == kUnknown)
        item(s).infoCycle = cycle;
    }
    if (cfg.branchResolveStage == ResolveStage::EX) {
      doResolve(s);
      if (ended) return;
    }
    if (!s.dAccessDone && !s.illegal) {
      s.dAccessDone = true;
      auto cls = isa::classify(s.ins);
      if (cls.isLoad || cls.isStore) {
        uint32_t addr;
        if (s.stepped && s.res.memAccess)
          addr = s.res.memAddr;
        else
          addr = rm.regs[s.ins.rs1] + static_cast<uint32_t>(s.ins.imm);
        uint32_t lineAddr;
        if (!dcache.access(addr, lineAddr)) {
          s.dmiss = true;
          emit(Resource::DCacheLine, lineAddr, s.fid, s.pc);
        }
      }
    }
  }

  void onEnterId(Slot& s) {
    ensureDecoded(s);
    if (streamMode && s.streamIdx >= 0 && !s.illegal && s.ins.op == Op::Bb &&
        cfg.bbForwardStage == BbForward::ID && item(s).infoCycle == kUnknown)
      item(s).infoCycle = cycle;
    if (!speculative || s.illegal) return;
    auto cls = isa::classify(s.ins);
    if (cls.isConditionalBranch && !s.predCounted) {
      bool taken = false;
      switch (cfg.strategy) {
        case Strategy::StaticBP: taken = s.ins.imm < 0; break;  // backward taken
        case Strategy::DynamicBP:
        case Strategy::DynamicTargetBP: taken = bht[bhtIdx(s.pc)] >= 2; break;
        default: break;
      }
      s.predCounted = true;
      out.stats.predictions++;
      if (taken) {
        s.predTaken = true;
        s.predTarget = s.pc + static_cast<uint32_t>(s.ins.imm);
        fetchPc = s.predTarget;
        suppressFetch = true;
      }
    } else if (s.ins.op == Op::Jal && !s.predTaken) {
      // decode-time redirect for direct jumps (target is in the word)
      s.predTaken = true;
      s.predTarget = s.pc + static_cast<uint32_t>(s.ins.imm);
      fetchPc = s.predTarget;
      suppressFetch = true;
    }
  }

  // ---- fetch -------------------------------------------------------------

  void issueInto(Slot& dst, uint32_t addr, int streamIdx, bool side) {
    dst = Slot{};
    dst.valid = true;
    dst.fid = nextFid++;
    dst.pc = addr;
    dst.word = fetchWord(addr);
    dst.streamIdx = streamIdx;
    dst.side = side;
    emit(Resource::FetchBus, addr, dst.fid, addr);
    uint32_t lineAddr;
    if (!icache.access(addr, lineAddr)) {
      emit(Resource::ICacheLine, lineAddr, dst.fid, addr);
      ifBusy = cfg.icache.missPenalty;
    }
    out.stats.issuedSlots++;
    if (streamIdx >= 0) {
      auto& it = gen->items[static_cast<size_t>(streamIdx)];
      it.issued = true;
      it.issueCycle = cycle;
    }
  }

  uint64_t depReady(StreamItem::Dep d, int idx) const {
    if (d == StreamItem::Dep::None) return 0;
    const StreamItem& o = gen->items[static_cast<size_t>(idx)];
    switch (d) {
      case StreamItem::Dep::BbIssued:
        return o.issueCycle == kUnknown ? kUnknown : o.issueCycle + 1;
      case StreamItem::Dep::BbInfo:
      case StreamItem::Dep::ColdBbInfo:
        return o.infoCycle;
      case StreamItem::Dep::CfResolve:
      case StreamItem::Dep::LcntResolve:
        return o.resolveCycle;
      case StreamItem::Dep::GateDecode:
        return o.enterExCycle;
      case StreamItem::Dep::GateResolve:
        // fetch resumes once the previous instruction leaves the resolve stage
        return cfg.branchResolveStage == ResolveStage::MEM ? o.enterWbCycle : o.enterMemCycle;
      default:
        return 0;
    }
  }

  uint64_t itemReady(const StreamItem& it) const {
    uint64_t a = depReady(it.dep, it.depIdx);
    uint64_t b = depReady(it.dep2, it.dep2Idx);
    return std::max(a, b);
  }

  StallTag itemTag(const StreamItem& it) const {
    // attribute the stall to whichever dependency is still outstanding
    uint64_t a = depReady(it.dep, it.depIdx);
    uint64_t b = depReady(it.dep2, it.dep2Idx);
    if (it.dep2 != StreamItem::Dep::None && (b == kUnknown || b > a)) return StallTag::Bb;
    return it.tag;
  }

  int nextStreamIdx(bool side) {
    size_t& p = side ? scanSide : scanMain;
    while (p < gen->items.size() &&
           (gen->items[p].side != side || gen->items[p].issued))
      ++p;
    return p < gen->items.size() ? static_cast<int>(p) : -1;
  }

  void bumpStall(StallTag t) {
    switch (t) {
      case StallTag::Decode: out.stats.stalls.waitDecode++; break;
      case StallTag::Branch: out.stats.stalls.waitBranch++; break;
      case StallTag::Bb: out.stats.stalls.waitBb++; break;
    }
  }

  // returns true when a port issue happened
  bool fetchStream(bool& stallCounted) {
    gen->ensure(std::max(scanMain, scanSide) + 16);
    int sideIdx = nextStreamIdx(true);
    int mainIdx = nextStreamIdx(false);

    if (cfg.dualPortBb && sideIdx >= 0 && itemReady(gen->items[static_cast<size_t>(sideIdx)]) <= cycle) {
      // dedicated announcement port: fetch costs no issue slot
      StreamItem& it = gen->items[static_cast<size_t>(sideIdx)];
      Slot s;
      s.valid = true;
      s.fid = nextFid++;
      s.pc = it.addr;
      s.word = fetchWord(it.addr);
      s.streamIdx = sideIdx;
      s.side = true;
      ensureDecoded(s);
      emit(Resource::FetchBus, it.addr, s.fid, it.addr);
      it.issued = true;
      it.issueCycle = cycle;
      it.infoCycle = cycle + (cfg.bbForwardStage == BbForward::EX ? 2 : 1);
      out.stats.freeSlots++;
      deferredBb.push_back(s);
      drainDeferred();
      if (ended) return false;
      sideIdx = -1;
    }

    if (st[IF].valid) {
      if (!stallCounted && ifStalled) {
        out.stats.stalls.icacheMiss++;
        stallCounted = true;
      }
      return false;
    }

    if (!cfg.dualPortBb && sideIdx >= 0) {
      const StreamItem& sideIt = gen->items[static_cast<size_t>(sideIdx)];
      if (itemReady(sideIt) <= cycle) {
        issueInto(st[IF], sideIt.addr, sideIdx, true);
        return true;
      }
    }
    if (mainIdx >= 0) {
      const StreamItem& mainIt = gen->items[static_cast<size_t>(mainIdx)];
      if (itemReady(mainIt) <= cycle) {
        issueInto(st[IF], mainIt.addr, mainIdx, false);
        return true;
      }
    }
    if (!stallCounted && (sideIdx >= 0 || mainIdx >= 0)) {
      // attribute the stall to whichever candidate would issue first;
      // ties go to the body (the announcement only wins the port when ready),
      // except when the body is itself blocked behind the pending announcement
      int pick = mainIdx;
      if (sideIdx >= 0) {
        if (mainIdx < 0) {
          pick = sideIdx;
        } else {
          const StreamItem& mi = gen->items[static_cast<size_t>(mainIdx)];
          if (itemReady(gen->items[static_cast<size_t>(sideIdx)]) < itemReady(mi) ||
              (mi.dep == StreamItem::Dep::BbIssued && mi.depIdx == sideIdx))
            pick = sideIdx;
        }
      }
      bumpStall(itemTag(gen->items[static_cast<size_t>(pick)]));
      stallCounted = true;
    }
    return false;
  }

  bool fetchPcDriven(bool& stallCounted) {
    if (suppressFetch) {
      if (!stallCounted) {
        out.stats.stalls.waitBranch++;
        stallCounted = true;
      }
      return false;
    }
    if (st[IF].valid) {
      if (!stallCounted && ifStalled) {
        out.stats.stalls.icacheMiss++;
        stallCounted = true;
      }
      return false;
    }
    uint32_t addr = fetchPc;
    issueInto(st[IF], addr, -1, false);
    uint32_t next = addr + 4;
    if (cfg.strategy == Strategy::DynamicTargetBP) {
      uint32_t ti = btbIdx(addr);
      if (btbValid[ti] && btbTag[ti] == addr) {
        out.stats.predictions++;
        st[IF].predCounted = true;
        if (bht[bhtIdx(addr)] >= 2) {
          st[IF].predTaken = true;
          st[IF].predTarget = btbTarget[ti];
          next = btbTarget[ti];
        }
      }
    }
    fetchPc = next;
    return true;
  }

  // ---- main loop ---------------------------------------------------------

  void collectPending() {
    // every issued fetch either retired, was flush-killed, or is still pending
    for (uint64_t f = 0; f < nextFid; ++f)
      if (!out.retiredFids.count(f) && !out.flushKilledFids.count(f) && f != out.exceptionFid)
        out.pendingFids.insert(f);
  }

  void finish() {
    uint64_t pad = cfg.branchResolveStage == ResolveStage::MEM ? 2 : 3;
    out.stats.cycles = cycle + pad;
    collectPending();
    uint64_t counted = issueCycles + out.stats.stalls.total();
    out.stats.drainCycles = out.stats.cycles > counted ? out.stats.cycles - counted : 0;
  }

  SimResult run() {
    for (cycle = 0; cycle < maxCycles; ++cycle) {
      suppressFetch = false;
      bool stallCounted = false;

      // WB drains
      st[WB].valid = false;

      // MEM: hold the whole pipe while a miss is outstanding
      if (st[MEM].valid) {
        if (memBusy > 0) {
          --memBusy;
          out.stats.stalls.dcacheMiss++;
          continue;
        }
        st[WB] = st[MEM];
        st[MEM].valid = false;
        onEnterWb(st[WB]);
      }

      // EX -> MEM
      bool memFilled = false;
      if (st[EX].valid) {
        st[MEM] = st[EX];
        st[EX].valid = false;
        memFilled = true;
        if (streamMode && st[MEM].streamIdx >= 0) item(st[MEM]).enterMemCycle = cycle;
        if (cfg.branchResolveStage == ResolveStage::MEM) doResolve(st[MEM]);
        if (ended) break;
        if (st[MEM].dmiss) memBusy = cfg.dcache.missPenalty;
      }

      // ID -> EX, with the one-cycle load-use bubble
      if (st[ID].valid && !st[EX].valid) {
        ensureDecoded(st[ID]);
        bool hazard = false;
        if (memFilled && st[MEM].valid && !st[MEM].illegal &&
            isa::classify(st[MEM].ins).isLoad) {
          auto use = isa::regUse(st[ID].illegal ? isa::Instruction{} : st[ID].ins);
          uint8_t def = isa::regUse(st[MEM].ins).def;
          for (int i = 0; i < use.nReads; ++i)
            if (use.reads[i] == def && def != 0) hazard = true;
        }
        if (hazard) {
          out.stats.stalls.loadUse++;
          stallCounted = true;
        } else {
          st[EX] = st[ID];
          st[ID].valid = false;
          onEnterEx(st[EX]);
          if (ended) break;
        }
      }

      // IF -> ID
      ifStalled = false;
      if (st[IF].valid) {
        if (ifBusy > 0) {
          --ifBusy;
          ifStalled = true;  // still paying the instruction-cache miss
        } else if (!st[ID].valid) {
          st[ID] = st[IF];
          st[IF].valid = false;
          onEnterId(st[ID]);
        }
      }

      if (pendingFlush) applyFlush();

      // fetch
      bool issued = streamMode ? fetchStream(stallCounted) : fetchPcDriven(stallCounted);
      if (ended) break;
      if (issued) issueCycles++;
    }
    if (ended) {
      finish();
    } else {
      out.stop = StopKind::FuelExhausted;
      out.stats.cycles = cycle;
      collectPending();
      uint64_t counted = issueCycles + out.stats.stalls.total();
      out.stats.drainCycles = out.stats.cycles > counted ? out.stats.cycles - counted : 0;
    }
    out.state = rm;
    out.dcacheLineBytes = cfg.dcache.lineBytes;
    for (uint32_t i = 0; i < dcache.nLines; ++i)
      if (dcache.valid[i]) out.dcacheLines.push_back(dcache.tag[i]);
    return std::move(out);
  }
};

}  // namespace

bool SimResult::dcacheHasLine(uint32_t addr) const {
  uint32_t la = addr & ~(dcacheLineBytes - 1);
  return std::find(dcacheLines.begin(), dcacheLines.end(), la) != dcacheLines.end();
}

SimResult simulate(const assembler::ProgramImage& img, const PipelineConfig& cfg,
                   uint64_t maxCycles) {
  Sim sim(img, cfg, maxCycles);
  return sim.run();
}

const char* strategyName(Strategy s) {
  switch (s) {
    case Strategy::Simplest: return "simplest";
    case Strategy::Baseline: return "baseline";
    case Strategy::StaticBP: return "static-bp";
    case Strategy::DynamicBP: return "dynamic-bp";
    case Strategy::DynamicTargetBP: return "dynamic-target-bp";
    case Strategy::BasicBlocker: return "basicblocker";
  }
  return "?";
}

bool parseStrategy(const std::string& name, Strategy& out) {
  std::string n;
  for (char c : name)
    if (c != '-' && c != '_') n.push_back(static_cast<char>(std::tolower(c)));
  if (n == "simplest") out = Strategy::Simplest;
  else if (n == "baseline") out = Strategy::Baseline;
  else if (n == "staticbp" || n == "static") out = Strategy::StaticBP;
  else if (n == "dynamicbp" || n == "dynamic") out = Strategy::DynamicBP;
  else if (n == "dynamictargetbp" || n == "dynamictarget") out = Strategy::DynamicTargetBP;
  else if (n == "basicblocker" || n == "bb") out = Strategy::BasicBlocker;
  else return false;
  return true;
}

Hotspot hotspotAnalysis(const RunStats& stats, const cfg::SizeReport& report,
                        const assembler::ProgramImage& img) {
  Hotspot h;
  std::map<std::string, std::pair<uint32_t, uint32_t>> byLabel;  // size, resched
  for (const auto& b : report.perBlock)
    byLabel[b.label] = {static_cast<uint32_t>(b.size), static_cast<uint32_t>(b.reschedParam)};
  std::map<uint32_t, std::vector<std::string>> labelsAt;
  for (const auto& [name, addr] : img.symbols) labelsAt[addr].push_back(name);

  uint64_t total = 0;
  double sizeSum = 0, reschedSum = 0;
  for (const auto& [addr, count] : stats.blockExec) {
    auto la = labelsAt.find(addr);
    if (la == labelsAt.end()) continue;
    const std::pair<uint32_t, uint32_t>* stat = nullptr;
    for (const auto& name : la->second) {
      auto it = byLabel.find(name);
      if (it != byLabel.end()) {
        stat = &it->second;
        break;
      }
    }
    if (!stat) continue;
    total += count;
    sizeSum += double(stat->first) * double(count);
    reschedSum += double(stat->second) * double(count);
    h.sizeHist[stat->first] += count;
    h.reschedHist[stat->second] += count;
  }
  if (total == 0) return h;
  h.meanSize = sizeSum / double(total);
  h.meanResched = reschedSum / double(total);
  auto weightedMedian = [total](const std::map<uint32_t, uint64_t>& hist) {
    uint64_t half = (total + 1) / 2, cum = 0;
    for (const auto& [v, c] : hist) {
      cum += c;
      if (cum >= half) return double(v);
    }
    return 0.0;
  };
  h.medianSize = weightedMedian(h.sizeHist);
  h.medianResched = weightedMedian(h.reschedHist);
  return h;
}

std::string statsJson(const SimResult& r, const PipelineConfig& cfg) {
  nlohmann::json j;
  j["strategy"] = strategyName(cfg.strategy);
  j["resolve"] = cfg.branchResolveStage == ResolveStage::MEM ? "mem" : "ex";
  j["bb_forward"] = cfg.bbForwardStage == BbForward::EX ? "ex" : "id";
  j["dual_port_bb"] = cfg.dualPortBb;
  j["caches"] = cfg.icache.enabled || cfg.dcache.enabled;
  j["mode"] = cfg.mode == refmodel::Mode::BbRequired ? "bb" : "legacy";
  j["stop"] = refmodel::stopName(r.stop);
  j["exit_code"] = r.exitCode;
  j["cycles"] = r.stats.cycles;
  j["retired"] = r.stats.retired;
  j["flushes"] = r.stats.flushes;
  j["flush_events"] = r.stats.flushEvents;
  j["issued_slots"] = r.stats.issuedSlots;
  j["free_slots"] = r.stats.freeSlots;
  j["drain_cycles"] = r.stats.drainCycles;
  j["stalls"] = {
      {"wait_decode", r.stats.stalls.waitDecode}, {"wait_branch", r.stats.stalls.waitBranch},
      {"wait_bb", r.stats.stalls.waitBb},         {"icache_miss", r.stats.stalls.icacheMiss},
      {"dcache_miss", r.stats.stalls.dcacheMiss}, {"load_use", r.stats.stalls.loadUse},
  };
  j["predictor"] = {{"predictions", r.stats.predictions},
                    {"mispredictions", r.stats.mispredictions}};
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [addr, count] : r.stats.blockExec) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", addr);
    blocks[buf] = count;
  }
  j["block_exec"] = blocks;
  nlohmann::json sizes = nlohmann::json::object();
  for (const auto& [size, count] : r.stats.blockSizeHist) sizes[std::to_string(size)] = count;
  j["block_size_hist"] = sizes;
  return j.dump(2);
}

}  // namespace bbrv::pipeline

namespace bbrv::trace {

const char* resourceName(Resource r) {
  switch (r) {
    case Resource::ICacheLine: return "icache-line";
    case Resource::DCacheLine: return "dcache-line";
    case Resource::BhtEntry: return "bht-entry";
    case Resource::BtbEntry: return "btb-entry";
    case Resource::RegFile: return "regfile";
    case Resource::PcWrite: return "pc";
    case Resource::BbState: return "bb-state";
    case Resource::LoopSet: return "loop-set";
    case Resource::FetchBus: return "fetch-bus";
  }
  return "?";
}

}  // namespace bbrv::trace
