// Sample-prep protocol bands checked lab-side before analyses run. This is
// device-protocol validation, not ledger math; the ledger never sees prep.

export interface PrepFields {
  sievePassFraction: number;
  dilutionSample: number;
  dilutionWater: number;
  extractVolumeMl: number;
  incubationS: number;
}

export function prepViolations(p: PrepFields): string[] {
  const violations: string[] = [];
  if (!(p.sievePassFraction >= 0.6 && p.sievePassFraction <= 0.7)) {
    violations.push(
      `sieve pass fraction ${p.sievePassFraction} outside [0.60, 0.70]`,
    );
  }
  if (p.dilutionSample !== 1 || p.dilutionWater !== 5) {
    violations.push(
      `dilution ${p.dilutionSample}:${p.dilutionWater} is not 1:5`,
    );
  }
  if (p.extractVolumeMl !== 12) {
    violations.push(`extract volume ${p.extractVolumeMl} ml is not 12 ml`);
  }
  if (p.incubationS < 300) {
    violations.push(`incubation ${p.incubationS} s is under 300 s`);
  }
  return violations;
}
