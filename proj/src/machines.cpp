#include "cra/learning.hpp"
#include "cra/machine_io.hpp"

namespace cra {

namespace {

constexpr const char* kOfficeMachine = R"(# Fetch all mail, make one coffee per letter, deliver every pair.
KIND CCRA
COUNTERS 2
PROPS M EM Cf Pd Dk
STATES fetch coffee deliver
TERMINAL fail success
INITIAL fetch
TRANSITIONS
fetch -> fetch GUARD M & !EM & !Dk ZT [0,0] ADD [1,0] REWARD 0
fetch -> fetch GUARD M & !EM & !Dk ZT [1,0] ADD [1,0] REWARD 0
fetch -> coffee GUARD EM & !M & !Dk ZT [1,0] ADD [0,0] REWARD 0
fetch -> fail GUARD Dk ZT [0,0] ADD [0,0] REWARD 0
fetch -> fail GUARD Dk ZT [1,0] ADD [0,0] REWARD 0
coffee -> coffee GUARD Cf & !Dk ZT [1,0] ADD [-1,1] REWARD 0
coffee -> coffee GUARD Cf & !Dk ZT [1,1] ADD [-1,1] REWARD 0
coffee -> fail GUARD Dk ZT [1,0] ADD [0,0] REWARD 0
coffee -> fail GUARD Dk ZT [1,1] ADD [0,0] REWARD 0
coffee -> deliver GUARD TRUE ZT [0,1] ADD [0,0] REWARD 0
deliver -> deliver GUARD Pd & !Cf & !Dk ZT [0,1] ADD [0,-1] REWARD 0
deliver -> fail GUARD Cf | Dk ZT [0,1] ADD [0,0] REWARD 0
deliver -> success GUARD TRUE ZT [0,0] ADD [0,0] REWARD 1
)";

constexpr const char* kLetterMachine = R"(# A^N B C D^N on LetterEnv. c0 counts A, c1 tracks the single C.
KIND CCRA
COUNTERS 2
PROPS A B C D
STATES u0 u1
TERMINAL fail success
INITIAL u0
TRANSITIONS
u0 -> u0 GUARD A & !B ZT [0,0] ADD [1,0] REWARD 0
u0 -> u0 GUARD A & !B ZT [1,0] ADD [1,0] REWARD 0
u0 -> u1 GUARD B & !A ZT [1,0] ADD [0,1] REWARD 0
u0 -> fail GUARD !A & !B ZT [0,0] ADD [0,0] REWARD 0
u0 -> fail GUARD !A & !B ZT [1,0] ADD [0,0] REWARD 0
u1 -> u1 GUARD C ZT [1,1] ADD [0,-1] REWARD 0
u1 -> fail GUARD !C ZT [1,1] ADD [0,0] REWARD 0
u1 -> u1 GUARD D ZT [1,0] ADD [-1,0] REWARD 0
u1 -> fail GUARD !D ZT [1,0] ADD [0,0] REWARD 0
u1 -> success GUARD TRUE ZT [0,0] ADD [0,0] REWARD 1
)";

}  // namespace

CountingRewardAutomaton office_machine() { return parse_machine(kOfficeMachine).as_cra(); }

CountingRewardAutomaton letter_machine() { return parse_machine(kLetterMachine).as_cra(); }

}  // namespace cra
